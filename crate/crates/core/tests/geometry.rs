mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneseq::geometry::{build_distance_matrix, giou, iou, project_topdown, DistanceNormalization};
use sceneseq::{Box2D, Scene};

use common::{object, random_box, raster_giou, square_floor};

#[test]
fn giou_agrees_with_raster_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let (fast, slow) = (giou(&a, &b), raster_giou(&a, &b, 256));
        assert!((fast - slow).abs() < 2e-2, "{a:?} {b:?}: {fast} vs {slow}");
    }
}

#[test]
fn giou_hand_values() {
    let unit = Box2D::new([0.0, 0.0], [1.0, 1.0]);
    assert_eq!(giou(&unit, &unit), 1.0);
    // side by side, touching: IoU 0, hull equals union
    let right = Box2D::new([1.0, 0.0], [2.0, 1.0]);
    assert!(giou(&unit, &right).abs() < 1e-12);
    // one unit gap: union 2, hull 3
    let far = Box2D::new([2.0, 0.0], [3.0, 1.0]);
    assert!((giou(&unit, &far) + 1.0 / 3.0).abs() < 1e-12);
    // half overlap: inter 0.5, union 1.5, hull 1.5
    let half = Box2D::new([0.5, 0.0], [1.5, 1.0]);
    assert!((giou(&unit, &half) - 1.0 / 3.0).abs() < 1e-12);
    assert!((iou(&unit, &half) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn giou_symmetric_and_bounded() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let (a, b) = (random_box(&mut rng), random_box(&mut rng));
        let g = giou(&a, &b);
        assert!((-1.0..=1.0).contains(&g));
        assert_eq!(g, giou(&b, &a));
        assert!(g <= iou(&a, &b) + 1e-12);
    }
}

#[test]
fn quarter_turn_swaps_extents() {
    let o = object(0, 1.0, 2.0, 2.0, 0.5, std::f64::consts::FRAC_PI_2);
    let b = project_topdown(&o);
    assert!((b.width() - 0.5).abs() < 1e-12);
    assert!((b.depth() - 2.0).abs() < 1e-12);
    assert_eq!(b.center(), [1.0, 2.0]);
}

#[test]
fn distance_matrix_by_hand() {
    let objects = vec![object(0, 0.0, 0.0, 1.0, 1.0, 0.0), object(1, 3.0, 4.0, 1.0, 1.0, 0.0)];
    let scene = Scene::new("m", "r", square_floor(5.0), objects);
    let raw = build_distance_matrix(&scene, 0.5, DistanceNormalization::None).unwrap();
    // centers 5 m apart; hull 4 x 5 = 20, union 2
    let expected = 5.0 + 0.5 * (1.0 - (0.0 - 18.0 / 20.0));
    assert!((raw.get(0, 1) - expected).abs() < 1e-12);
    assert_eq!(raw.get(0, 1), raw.get(1, 0));
    assert_eq!(raw.get(1, 1), 0.0);
    let norm = build_distance_matrix(&scene, 0.0, DistanceNormalization::Diagonal).unwrap();
    let diag = scene.reference_bounds().diagonal();
    assert!((norm.get(0, 1) - 5.0 / diag).abs() < 1e-12);
}

#[test]
fn rotation_wraps_into_half_open_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let r: f64 = rng.gen_range(-20.0..20.0);
        let o = object(0, 0.0, 0.0, 1.0, 1.0, r);
        assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&o.rotation));
        assert!((o.rotation.sin() - r.sin()).abs() < 1e-9 && (o.rotation.cos() - r.cos()).abs() < 1e-9);
    }
}

#[test]
fn invalid_sizes_rejected() {
    assert!(sceneseq::SceneObject::new(0, [0.0; 3], [1.0, 0.0, 1.0], 0.0).is_err());
    assert!(sceneseq::SceneObject::new(0, [f64::NAN, 0.0, 0.0], [1.0; 3], 0.0).is_err());
}
