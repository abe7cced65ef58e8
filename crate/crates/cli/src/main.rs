use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

mod commands;

/// Order-aware indoor scene synthesis.
#[derive(Parser, Debug)]
#[command(name = "sceneseq", version)]
struct Cli {
    /// JSON file whose keys override this subcommand's flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed; falls back to F2S_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a grammar dataset with ground-truth trees.
    Synth(SynthArgs),
    /// Parse a scene into a tree or forest (JSON + DOT).
    Parse(ParseArgs),
    /// Emit ordered sequences from a parse file.
    Order(OrderArgs),
    /// Train a model and write checkpoint and learning curve.
    Train(TrainArgs),
    /// Sample scenes on given floor plans.
    Sample(SampleArgs),
    /// Complete a partial scene.
    Complete(CompleteArgs),
    /// Re-place selected objects of a scene.
    Rearrange(RearrangeArgs),
    /// Compare generated scenes against reference scenes.
    Eval(EvalArgs),
    /// Render a scene as a top-down SVG.
    Render(RenderArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Output scenes (NDJSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Output class vocabulary; defaults to `vocab.json` next to `out`.
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
    /// Grammar spec JSON; the built-in living-room grammar otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ParseArgs {
    /// Scene JSON (single document).
    pub scene: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.15)]
    pub eps: f64,
    #[arg(long, default_value_t = 2)]
    pub min_samples: usize,
    /// Emit a single tree with outliers under the room node.
    #[arg(long, conflicts_with = "forest")]
    pub tree: bool,
    /// Emit the forest (default).
    #[arg(long)]
    pub forest: bool,
    /// `diagonal` or `none`.
    #[arg(long, default_value = "diagonal")]
    pub normalization: String,
    /// Output directory for `parse.json` and `tree.dot`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OrderArgs {
    /// Parse file written by `parse`.
    pub input: PathBuf,
    #[arg(long, default_value = "forest-bfs")]
    pub strategy: String,
    /// `bfs` or `dfs`; selects the traversal of forest strategies.
    #[arg(long)]
    pub traversal: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Training scenes (NDJSON, JSON array or single document).
    #[arg(long)]
    pub data: PathBuf,
    /// Class vocabulary; derived from the data when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Validation scenes; otherwise `val_fraction` of `data` is held out.
    #[arg(long)]
    pub val_data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// `desk` or `full` sized network.
    #[arg(long, default_value = "desk")]
    pub model: String,
    /// Full model config JSON, replacing `model`.
    #[arg(long)]
    pub model_config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub mask_rate: Option<f64>,
    #[arg(long)]
    pub noise_rate: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scenes whose floor plans (and room types) are reused in turn.
    #[arg(long)]
    pub floors: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Output scenes (NDJSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CompleteArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Partial scene JSON.
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RearrangeArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Object indices to re-place, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub generated: PathBuf,
    /// Class vocabulary; the union of both sets' classes when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Clustering weight for the tree-recovery score on reference scenes
    /// that carry ground truth.
    #[arg(long, default_value_t = 0.02)]
    pub lambda: f64,
    /// Metrics JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RenderArgs {
    pub scene: PathBuf,
    /// Document index when the input holds several scenes.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// What gets written next to every output.
#[derive(Serialize)]
struct RunConfig<'a, A> {
    command: &'a str,
    seed: u64,
    args: &'a A,
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("F2S_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("F2S_SEED=`{v}` is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

/// Overlays the keys of a JSON config file on parsed flags.
fn apply_config<A: Serialize + DeserializeOwned>(args: A, config: Option<&Path>) -> Result<A> {
    let Some(path) = config else { return Ok(args) };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let overlay: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let serde_json::Value::Object(overlay) = overlay else {
        bail!("config {} must hold a JSON object", path.display());
    };
    let mut base = serde_json::to_value(&args)?;
    let fields = base.as_object_mut().expect("argument structs serialize to objects");
    for (k, v) in overlay {
        if !fields.contains_key(&k) {
            bail!("config {}: unknown key `{k}`", path.display());
        }
        fields.insert(k, v);
    }
    serde_json::from_value(base).with_context(|| format!("config {} has a badly typed value", path.display()))
}

/// `run_config.json` inside a directory output, `<file>.run_config.json`
/// beside a file output.
pub fn write_run_config<A: Serialize>(out: &Path, is_dir: bool, command: &str, seed: u64, args: &A) -> Result<()> {
    let path = if is_dir {
        out.join("run_config.json")
    } else {
        let mut name = out.file_name().context("output path has no file name")?.to_os_string();
        name.push(".run_config.json");
        out.with_file_name(name)
    };
    let cfg = RunConfig { command, seed, args };
    std::fs::write(&path, serde_json::to_string_pretty(&cfg)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = resolve_seed(cli.seed)?;
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::Synth(a) => commands::synth(apply_config(a, cfg)?, seed),
        Command::Parse(a) => commands::parse(apply_config(a, cfg)?, seed),
        Command::Order(a) => commands::order(apply_config(a, cfg)?, seed),
        Command::Train(a) => commands::train(apply_config(a, cfg)?, seed),
        Command::Sample(a) => commands::sample(apply_config(a, cfg)?, seed),
        Command::Complete(a) => commands::complete(apply_config(a, cfg)?, seed),
        Command::Rearrange(a) => commands::rearrange(apply_config(a, cfg)?, seed),
        Command::Eval(a) => commands::eval(apply_config(a, cfg)?, seed),
        Command::Render(a) => commands::render(apply_config(a, cfg)?, seed),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
