mod common;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneseq::ordering::{
    derive_seed, linearize, make_ordering, order_with_forest, parse_scene, tree2forest, ForestMode, OrderingConfig, Parent,
    SceneTree, Strategy, Traversal, MEMBER_CAP,
};

use common::{grammar_scenes, random_tree, sequence_violations};

#[test]
fn random_trees_linearize_cleanly() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..300 {
        let n = rng.gen_range(1..14);
        let tree = random_tree(n, 3, &mut rng);
        for traversal in [Traversal::Bfs, Traversal::Dfs] {
            let seq = linearize(&tree, traversal, &mut rng);
            let v = sequence_violations(&tree, &seq, traversal);
            assert!(v.is_empty(), "{v:?}");
        }
    }
}

#[test]
fn forest_members_cover_every_assignment() {
    let mut base = SceneTree::empty(6);
    base.attach(0, Parent::Root).unwrap();
    base.attach(1, Parent::Node(0)).unwrap();
    base.attach(2, Parent::Root).unwrap();
    base.attach(3, Parent::Node(2)).unwrap();
    let forest = tree2forest(base.clone(), vec![4, 5], ForestMode::Generalized).unwrap();
    // heads 0 and 2 plus the root, for each of two outliers
    assert_eq!(forest.member_count(), 9);
    let members = forest.members();
    let distinct: BTreeSet<Vec<(usize, i64)>> = members.iter().map(|t| t.to_parent_map().into_iter().collect()).collect();
    assert_eq!(distinct.len(), 9);
    assert!(members.iter().all(|t| t.is_complete()));

    let literal = tree2forest(base.clone(), vec![4, 5], ForestMode::SingleOutlier).unwrap();
    assert_eq!(literal.member_count(), 6);
    assert!(literal.members().iter().all(|t| t.len() == 5));

    let mut full = base;
    full.attach(4, Parent::Root).unwrap();
    full.attach(5, Parent::Node(4)).unwrap();
    let single = tree2forest(full.clone(), vec![], ForestMode::Generalized).unwrap();
    assert_eq!(single.member_count(), 1);
    assert_eq!(single.members(), vec![full]);
    assert_eq!(tree2forest(single.base, vec![], ForestMode::SingleOutlier).unwrap().member_count(), 0);
}

#[test]
fn member_count_is_capped() {
    let mut base = SceneTree::empty(12);
    base.attach(0, Parent::Root).unwrap();
    base.attach(1, Parent::Node(0)).unwrap();
    let forest = tree2forest(base, (2..12).collect(), ForestMode::Generalized).unwrap();
    // 2 choices for each of 10 outliers
    assert_eq!(forest.member_count(), MEMBER_CAP.min(1024));
    assert_eq!(forest.members().len(), MEMBER_CAP);
}

#[test]
fn parent_map_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..50 {
        let t = random_tree(9, 3, &mut rng);
        let back = SceneTree::from_parent_map(9, &t.to_parent_map()).unwrap();
        assert_eq!(back.to_parent_map(), t.to_parent_map());
    }
    let cyclic: BTreeMap<usize, i64> = [(0, 1), (1, 0)].into_iter().collect();
    assert!(SceneTree::from_parent_map(2, &cyclic).is_err());
    let dangling: BTreeMap<usize, i64> = [(0, 5)].into_iter().collect();
    assert!(SceneTree::from_parent_map(2, &dangling).is_err());
}

#[test]
fn strategies_on_grammar_scenes() {
    let (vocab, _, scenes) = grammar_scenes(30, 3);
    let freq = sceneseq::ordering::class_frequencies(&scenes, vocab.len());
    let cfg = OrderingConfig::default();
    for (i, scene) in scenes.iter().enumerate() {
        let parsed = parse_scene(scene, &cfg).unwrap();
        for strategy in Strategy::ALL {
            let seq = order_with_forest(scene, &parsed.forest, strategy, derive_seed(5, &[i as u64]), Some(&freq)).unwrap();
            assert!(seq.is_permutation());
            assert_eq!(seq.order.len(), scene.objects.len());
            let again = make_ordering(scene, strategy, derive_seed(5, &[i as u64]), &cfg, Some(&freq)).unwrap();
            assert_eq!(seq.order, again.order, "{strategy}");
        }
        // the same scene id always yields the same single random order
        let a = order_with_forest(scene, &parsed.forest, Strategy::RandomSingle, 1, None).unwrap();
        let b = order_with_forest(scene, &parsed.forest, Strategy::RandomSingle, 2, None).unwrap();
        assert_eq!(a.order, b.order);
    }
}

#[test]
fn fixed_order_needs_frequencies() {
    let (_, _, scenes) = grammar_scenes(1, 4);
    assert!(make_ordering(&scenes[0], Strategy::Fixed, 0, &OrderingConfig::default(), None).is_err());
}

#[test]
fn strategy_names_round_trip() {
    for s in Strategy::ALL {
        assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
    }
    assert_eq!("Forest_BFS".parse::<Strategy>().unwrap(), Strategy::ForestBfs);
    assert!("bfs-forest".parse::<Strategy>().is_err());
}

#[test]
fn two_groups_and_a_stray_cabinet() {
    use common::{object, square_floor};
    let scene = sceneseq::Scene::new(
        "fig",
        "living_room",
        square_floor(5.0),
        vec![
            object(0, -3.0, -3.0, 1.5, 0.9, 0.0),
            object(1, -3.0, -2.3, 0.45, 0.45, 0.0),
            object(2, 3.0, 3.0, 2.0, 0.9, 0.0),
            object(3, 3.0, 2.2, 1.0, 0.6, 0.0),
            object(4, 3.0, -3.0, 0.9, 0.4, 0.0),
        ],
    );
    let parsed = parse_scene(&scene, &OrderingConfig::default()).unwrap();
    assert_eq!(parsed.forest.outliers, vec![4]);
    // under either head or the room itself
    assert_eq!(parsed.forest.member_count(), 3);
    assert_eq!(sceneseq::metrics::diversity(&parsed.forest), 3);
    let parents: BTreeSet<i64> = parsed.forest.members().iter().map(|t| t.to_parent_map()[&4]).collect();
    assert_eq!(parents, BTreeSet::from([-1, 0, 2]));
}

#[test]
fn clustering_defaults() {
    let cfg = OrderingConfig::default();
    assert_eq!((cfg.lambda, cfg.eps, cfg.min_samples), (0.02, 0.15, 2));
}
