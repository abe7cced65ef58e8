mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneseq::geometry::{build_distance_matrix, DistanceNormalization};
use sceneseq::ordering::{dbscan, parse_scene, OrderingConfig, Parent};
use sceneseq::{DistanceMatrix, Scene};

use common::{dbscan_oracle, object, same_partition, square_floor};

fn rows(m: &DistanceMatrix) -> Vec<Vec<f64>> {
    (0..m.len()).map(|i| (0..m.len()).map(|j| m.get(i, j)).collect()).collect()
}

#[test]
fn matches_oracle_on_random_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..200 {
        let n = rng.gen_range(1..=12);
        let objects = (0..n)
            .map(|_| {
                object(0, rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(0.2..1.5), rng.gen_range(0.2..1.5), rng.gen_range(-3.0..3.0))
            })
            .collect();
        let scene = Scene::new("c", "r", square_floor(3.0), objects);
        let m = build_distance_matrix(&scene, 0.02, DistanceNormalization::Diagonal).unwrap();
        let eps = rng.gen_range(0.05..0.4);
        let min_samples = rng.gen_range(1..=4);
        let got = dbscan(&m, eps, min_samples).labels;
        let want = dbscan_oracle(&rows(&m), eps, min_samples);
        assert!(same_partition(&got, &want), "case {case}: {got:?} vs {want:?}");
        assert_eq!(got, want, "case {case}: visit order");
    }
}

#[test]
fn min_samples_one_has_no_noise() {
    let m = DistanceMatrix::from_rows(3, vec![0.0, 9.0, 9.0, 9.0, 0.0, 9.0, 9.0, 9.0, 0.0], 0.0).unwrap();
    assert_eq!(dbscan(&m, 0.1, 1).labels, vec![0, 1, 2]);
}

#[test]
fn border_point_goes_to_first_cluster() {
    // two dense runs of four with a point between them that is not core
    let pos: [f64; 9] = [0.0, 5.0, 10.0, 15.0, 30.0, 45.0, 50.0, 55.0, 60.0];
    let n = pos.len();
    let e: Vec<f64> = (0..n * n).map(|k| (pos[k / n] - pos[k % n]).abs()).collect();
    let m = DistanceMatrix::from_rows(n, e, 0.0).unwrap();
    let labels = dbscan(&m, 15.0, 4).labels;
    assert_eq!(labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1]);
    assert_eq!(labels, dbscan_oracle(&rows(&m), 15.0, 4));
}

#[test]
fn asymmetric_matrix_rejected() {
    assert!(DistanceMatrix::from_rows(2, vec![0.0, 1.0, 2.0, 0.0], 0.0).is_err());
    assert!(DistanceMatrix::from_rows(2, vec![1.0, 1.0, 1.0, 0.0], 0.0).is_err());
}

#[test]
fn largest_object_heads_its_cluster() {
    let objects = vec![
        object(1, -2.0, 0.5, 0.5, 0.5, 0.0),
        object(0, -2.0, -0.3, 1.6, 0.9, 0.0),
        object(1, -1.2, -0.3, 0.5, 0.5, 0.0),
        object(2, 2.5, 2.5, 0.4, 0.4, 0.0),
    ];
    let scene = Scene::new("h", "r", square_floor(3.5), objects);
    let parsed = parse_scene(&scene, &OrderingConfig::default()).unwrap();
    let tree = parsed.forest.outliers_at_root();
    assert_eq!(tree.parent(1), Some(Parent::Root));
    assert_eq!(tree.parent(0), Some(Parent::Node(1)));
    assert_eq!(tree.parent(2), Some(Parent::Node(1)));
    assert_eq!(parsed.forest.outliers, vec![3]);
    assert_eq!(parsed.forest.member_count(), 2);
}
