use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use sceneseq::data::{
    generate_grammar_dataset, load_scene, load_scenes, load_vocab, save_scene, save_scenes, save_vocab, split_dataset,
    vocab_from_documents, GrammarSpec, SceneDocument,
};
use sceneseq::geometry::DistanceNormalization;
use sceneseq::metrics::{ahd, categorical_kl, dataset_quality, inconsistency, CategoricalDistribution, HammingMode, SceneQuality};
use sceneseq::model::infer::SampleOptions;
use sceneseq::model::{self, EpochRecord, ModelConfig, TrainConfig, TrainReport};
use sceneseq::ordering::{
    class_frequencies, derive_seed, order_with_forest, parse_scene, rng_from_seed, ClusterLabels, ForestMode, OrderingConfig,
    SceneForest, SceneTree, Strategy, Traversal,
};
use sceneseq::render::render_svg;
use sceneseq::{Model, Scene};

use crate::{
    write_run_config, CompleteArgs, EvalArgs, OrderArgs, ParseArgs, RearrangeArgs, RenderArgs, SampleArgs, SynthArgs, TrainArgs,
};

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn to_scenes(docs: &[SceneDocument], vocab: &[String], what: &str) -> Result<Vec<Scene>> {
    docs.iter()
        .enumerate()
        .map(|(i, d)| d.to_scene(vocab).with_context(|| format!("{what} scene {i}")))
        .collect()
}

pub fn synth(args: SynthArgs, seed: u64) -> Result<()> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<GrammarSpec>(&text).with_context(|| format!("parsing grammar spec {}", p.display()))?
        }
        None => GrammarSpec::default(),
    };
    spec.seed = seed;
    let docs = generate_grammar_dataset(&spec, args.count)?;
    ensure_parent(&args.out)?;
    save_scenes(&args.out, &docs)?;
    let vocab_path = args.vocab_out.clone().unwrap_or_else(|| args.out.with_file_name("vocab.json"));
    save_vocab(&vocab_path, &spec.vocab())?;
    write_run_config(&args.out, false, "synth", seed, &args)?;
    log::info!("wrote {} scenes to {}", docs.len(), args.out.display());
    Ok(())
}

/// Serialized form of a forest.
#[derive(Debug, Serialize, Deserialize)]
struct ForestFile {
    base: BTreeMap<usize, i64>,
    outliers: Vec<usize>,
    parent_choices: Vec<Vec<i64>>,
    mode: ForestMode,
}

impl ForestFile {
    fn new(f: &SceneForest) -> Self {
        Self {
            base: f.base.to_parent_map(),
            outliers: f.outliers.clone(),
            parent_choices: f.parent_choices.iter().map(|c| c.iter().map(|p| p.to_index()).collect()).collect(),
            mode: f.mode,
        }
    }

    fn forest(&self, num_objects: usize) -> Result<SceneForest> {
        let parent_choices = self
            .parent_choices
            .iter()
            .map(|c| {
                c.iter()
                    .map(|&i| sceneseq::ordering::Parent::from_index(i).context("invalid parent index"))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        ensure!(parent_choices.len() == self.outliers.len(), "one parent-choice list per outlier expected");
        Ok(SceneForest {
            base: SceneTree::from_parent_map(num_objects, &self.base)?,
            outliers: self.outliers.clone(),
            parent_choices,
            mode: self.mode,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ParseFile {
    /// `tree` or `forest`.
    kind: String,
    scene: SceneDocument,
    /// Class names; ids index into this list.
    classes: Vec<String>,
    config: OrderingConfig,
    labels: ClusterLabels,
    forest: ForestFile,
    diversity: usize,
}

pub fn parse(args: ParseArgs, seed: u64) -> Result<()> {
    let doc = load_scene(&args.scene).with_context(|| format!("loading {}", args.scene.display()))?;
    let classes = vocab_from_documents(std::slice::from_ref(&doc));
    let scene: Scene = doc.to_scene(&classes)?;
    let cfg = OrderingConfig {
        lambda: args.lambda,
        eps: args.eps,
        min_samples: args.min_samples,
        normalization: args.normalization.parse::<DistanceNormalization>()?,
        ..OrderingConfig::default()
    };
    let parsed = parse_scene(&scene, &cfg)?;
    let (kind, forest) = if args.tree {
        let tree = parsed.forest.outliers_at_root();
        let single = SceneForest {
            base: tree,
            outliers: Vec::new(),
            parent_choices: Vec::new(),
            mode: parsed.forest.mode,
        };
        ("tree", single)
    } else {
        ("forest", parsed.forest)
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let labels: Vec<String> = doc.objects.iter().map(|o| o.class.clone()).collect();
    fs::write(args.out.join("tree.dot"), forest.outliers_at_root().to_dot(&labels))?;
    let file = ParseFile {
        kind: kind.into(),
        diversity: forest.member_count(),
        forest: ForestFile::new(&forest),
        scene: doc,
        classes,
        config: cfg,
        labels: parsed.labels,
    };
    fs::write(args.out.join("parse.json"), serde_json::to_string_pretty(&file)? + "\n")?;
    write_run_config(&args.out, true, "parse", seed, &args)?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SequenceRecord {
    indices: Vec<usize>,
    classes: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SequencesFile {
    strategy: String,
    seed: u64,
    sequences: Vec<SequenceRecord>,
    distinct_sequences: usize,
    forest_diversity: usize,
    inconsistency: f64,
}

pub fn order(args: OrderArgs, seed: u64) -> Result<()> {
    ensure!(args.count > 0, "--count must be positive");
    let text = fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let file: ParseFile = serde_json::from_str(&text).with_context(|| format!("{} is not a parse file", args.input.display()))?;
    let scene: Scene = file.scene.to_scene(&file.classes)?;
    let forest = file.forest.forest(scene.objects.len())?;
    let mut strategy: Strategy = args.strategy.parse()?;
    if let Some(t) = &args.traversal {
        let t: Traversal = t.parse()?;
        strategy = match (strategy, t) {
            (Strategy::ForestBfs | Strategy::ForestDfs, Traversal::Bfs) => Strategy::ForestBfs,
            (Strategy::ForestBfs | Strategy::ForestDfs, Traversal::Dfs) => Strategy::ForestDfs,
            (Strategy::TreeBfs, Traversal::Bfs) => Strategy::TreeBfs,
            (s, _) => bail!("--traversal does not apply to strategy `{}`", s.name()),
        };
    }
    if file.kind == "tree" && matches!(strategy, Strategy::ForestBfs | Strategy::ForestDfs) {
        bail!("strategy `{}` needs a forest parse; rerun `parse` without --tree", strategy.name());
    }
    if file.kind != "tree" && file.kind != "forest" {
        bail!("unknown parse file kind `{}`", file.kind);
    }
    let freq = class_frequencies(std::slice::from_ref(&scene), file.classes.len());
    let seqs: Vec<Vec<usize>> = (0..args.count)
        .map(|k| order_with_forest(&scene, &forest, strategy, derive_seed(seed, &[k as u64]), Some(&freq)).map(|o| o.order))
        .collect::<sceneseq::Result<_>>()?;
    let class_ids: Vec<usize> = scene.objects.iter().map(|o| o.class_id).collect();
    let distinct: BTreeSet<&Vec<usize>> = seqs.iter().collect();
    let out = SequencesFile {
        strategy: strategy.name().into(),
        seed,
        distinct_sequences: distinct.len(),
        forest_diversity: forest.member_count(),
        inconsistency: inconsistency(&seqs, &class_ids, HammingMode::Class)?,
        sequences: seqs
            .iter()
            .map(|s| SequenceRecord {
                indices: s.clone(),
                classes: s.iter().map(|&i| file.scene.objects[i].class.clone()).collect(),
            })
            .collect(),
    };
    ensure_parent(&args.out)?;
    fs::write(&args.out, serde_json::to_string_pretty(&out)? + "\n")?;
    write_run_config(&args.out, false, "order", seed, &args)?;
    Ok(())
}

fn model_config(args: &TrainArgs) -> Result<ModelConfig> {
    let mut mc = match &args.model_config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing model config {}", p.display()))?
        }
        None => match args.model.as_str() {
            "desk" => ModelConfig::desk(),
            "full" => ModelConfig::default(),
            other => bail!("unknown model size `{other}` (expected desk or full)"),
        },
    };
    if let Some(v) = args.mask_rate {
        mc.mask_rate = v;
    }
    if let Some(v) = args.noise_rate {
        mc.noise_rate = v;
    }
    if let Some(v) = args.dropout {
        mc.dropout = v;
    }
    mc.validate()?;
    Ok(mc)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    report: &'a TrainReport,
    model: &'a ModelConfig,
    train: &'a TrainConfig,
    train_scenes: usize,
    val_scenes: usize,
    parameters: usize,
}

pub fn train(args: TrainArgs, seed: u64) -> Result<()> {
    let docs = load_scenes(&args.data).with_context(|| format!("loading {}", args.data.display()))?;
    ensure!(!docs.is_empty(), "{} holds no scenes", args.data.display());
    let vocab = match &args.vocab {
        Some(p) => load_vocab(p)?,
        None => vocab_from_documents(&docs),
    };
    let scenes = to_scenes(&docs, &vocab, "training")?;
    let (train_set, val_set) = match &args.val_data {
        Some(p) => (scenes, to_scenes(&load_scenes(p)?, &vocab, "validation")?),
        None if args.val_fraction > 0.0 => {
            let s = split_dataset(&scenes, [1.0 - args.val_fraction, args.val_fraction, 0.0], seed)?;
            (s.train, s.val)
        }
        None => (scenes, Vec::new()),
    };
    let mc = model_config(&args)?;
    let mut tc = TrainConfig {
        seed,
        rotation_augmentation: !args.no_augment,
        max_steps: args.max_steps,
        ..TrainConfig::default()
    };
    if let Some(v) = args.epochs {
        tc.epochs = v;
    }
    if let Some(v) = args.batch {
        tc.batch_size = v;
    }
    if let Some(v) = args.lr {
        tc.optimizer.lr = v;
    }
    if let Some(v) = &args.strategy {
        tc.strategy = v.parse()?;
    }
    if let Some(v) = args.eval_every {
        tc.eval_every = v;
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut rows: Vec<EpochRecord> = Vec::new();
    let (m, report) = model::train(&train_set, &val_set, vocab.clone(), mc.clone(), &tc, &mut |r| {
        rows.push(r.clone());
    })?;
    m.save(args.out.join("model.ckpt"))?;
    save_vocab(args.out.join("vocab.json"), &vocab)?;
    let mut w = csv::Writer::from_path(args.out.join("learning_curve.csv"))?;
    w.write_record(["epoch", "steps", "train_nll", "val_nll"])?;
    for r in &rows {
        w.write_record([
            r.epoch.to_string(),
            r.steps.to_string(),
            r.train_nll.to_string(),
            r.val_nll.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let summary = TrainSummary {
        report: &report,
        model: &mc,
        train: &tc,
        train_scenes: train_set.len(),
        val_scenes: val_set.len(),
        parameters: m.params().num_scalars(),
    };
    fs::write(args.out.join("report.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    write_run_config(&args.out, true, "train", seed, &args)?;
    log::info!("best epoch {} metric {:.4}; wrote {}", report.best_epoch, report.best_metric, args.out.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn ordering_of(m: &Model) -> OrderingConfig {
    m.train_config.as_ref().map(|t| t.ordering).unwrap_or_default()
}

pub fn sample(args: SampleArgs, seed: u64) -> Result<()> {
    let m = load_model(&args.checkpoint)?;
    let floors = load_scenes(&args.floors).with_context(|| format!("loading {}", args.floors.display()))?;
    ensure!(!floors.is_empty(), "{} holds no floor plans", args.floors.display());
    let opts = SampleOptions {
        temperature: args.temperature,
        max_len: args.max_len,
    };
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(args.count);
    for i in 0..args.count {
        let f = &floors[i % floors.len()];
        let s = m.sample_scene(&format!("sample-{i:05}"), &f.room_type, &f.floor, &opts, &mut rng)?;
        if s.truncated {
            log::warn!("sample {i} hit the length cap");
        }
        out.push(SceneDocument::from_scene(&s.scene, &m.vocab, None)?);
    }
    ensure_parent(&args.out)?;
    save_scenes(&args.out, &out)?;
    write_run_config(&args.out, false, "sample", seed, &args)?;
    Ok(())
}

pub fn complete(args: CompleteArgs, seed: u64) -> Result<()> {
    let m = load_model(&args.checkpoint)?;
    let doc = load_scene(&args.scene).with_context(|| format!("loading {}", args.scene.display()))?;
    let partial: Scene = doc.to_scene(&m.vocab)?;
    let opts = SampleOptions {
        temperature: args.temperature,
        max_len: args.max_len,
    };
    let s = m.complete_scene(&partial, &opts, &ordering_of(&m), &mut rng_from_seed(seed))?;
    ensure_parent(&args.out)?;
    save_scene(&args.out, &SceneDocument::from_scene(&s.scene, &m.vocab, None)?)?;
    write_run_config(&args.out, false, "complete", seed, &args)?;
    Ok(())
}

pub fn rearrange(args: RearrangeArgs, seed: u64) -> Result<()> {
    let m = load_model(&args.checkpoint)?;
    let doc = load_scene(&args.scene).with_context(|| format!("loading {}", args.scene.display()))?;
    let scene: Scene = doc.to_scene(&m.vocab)?;
    let s = m.rearrange(&scene, &args.targets, &ordering_of(&m), &mut rng_from_seed(seed))?;
    ensure_parent(&args.out)?;
    save_scene(&args.out, &SceneDocument::from_scene(&s, &m.vocab, None)?)?;
    write_run_config(&args.out, false, "rearrange", seed, &args)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    reference_scenes: usize,
    generated_scenes: usize,
    /// KL(reference || generated) over class frequencies, nats.
    class_kl: f64,
    reference_quality: SceneQuality,
    generated_quality: SceneQuality,
    /// Mean tree-recovery score over reference scenes with ground truth.
    ahd: Option<f64>,
    ahd_scenes: usize,
}

pub fn eval(args: EvalArgs, seed: u64) -> Result<()> {
    let reference = load_scenes(&args.reference).with_context(|| format!("loading {}", args.reference.display()))?;
    let generated = load_scenes(&args.generated).with_context(|| format!("loading {}", args.generated.display()))?;
    let vocab = match &args.vocab {
        Some(p) => load_vocab(p)?,
        None => vocab_from_documents(&[reference.clone(), generated.clone()].concat()),
    };
    let rs = to_scenes(&reference, &vocab, "reference")?;
    let gs = to_scenes(&generated, &vocab, "generated")?;
    let p = CategoricalDistribution::from_scenes(&rs, vocab.len())?;
    let q = CategoricalDistribution::from_scenes(&gs, vocab.len())?;
    let cfg = OrderingConfig {
        lambda: args.lambda,
        ..OrderingConfig::default()
    };
    let mut scores = Vec::new();
    for (d, s) in reference.iter().zip(&rs) {
        if let (Some(truth), false) = (d.ground_truth()?, s.objects.is_empty()) {
            let parsed = parse_scene(s, &cfg)?;
            scores.push(ahd(&parsed.forest.outliers_at_root(), &truth)?);
        }
    }
    let report = EvalReport {
        reference_scenes: rs.len(),
        generated_scenes: gs.len(),
        class_kl: categorical_kl(&p, &q)?,
        reference_quality: dataset_quality(&rs),
        generated_quality: dataset_quality(&gs),
        ahd: (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64),
        ahd_scenes: scores.len(),
    };
    ensure_parent(&args.out)?;
    fs::write(&args.out, serde_json::to_string_pretty(&report)? + "\n")?;
    write_run_config(&args.out, false, "eval", seed, &args)?;
    Ok(())
}

pub fn render(args: RenderArgs, seed: u64) -> Result<()> {
    let docs = load_scenes(&args.scene).with_context(|| format!("loading {}", args.scene.display()))?;
    let doc = docs
        .get(args.index)
        .with_context(|| format!("{} holds {} scenes, no index {}", args.scene.display(), docs.len(), args.index))?;
    ensure_parent(&args.out)?;
    fs::write(&args.out, render_svg(doc))?;
    write_run_config(&args.out, false, "render", seed, &args)?;
    Ok(())
}
