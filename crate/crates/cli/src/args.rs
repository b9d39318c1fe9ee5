use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prunedoc::{IndexStrategy, SynthMode};
use serde::Serialize;

use crate::failure::Failure;

pub const SEED_ENV: &str = "PRUNEDOC_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "prunedoc",
    version,
    about = "Text-patch token pruning for document images",
    args_override_self = true
)]
pub struct Cli {
    /// JSON object whose keys supply flags of the subcommand; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic corpus of pages or receipts with box annotations.
    Synth(SynthArgs),
    /// Train the patch classifier on an annotated corpus.
    Train(TrainArgs),
    /// Classify, pool and prune one image into a PTOK1 token set.
    Prune(PruneArgs),
    /// Token and FLOPs reduction over a set of token files.
    Stats(StatsArgs),
    /// Visualize which patches a token set keeps.
    Overlay(OverlayArgs),
    /// Check index-preserving pruning against masked full-grid inference.
    Oracle(OracleArgs),
}

pub const SUBCOMMANDS: [&str; 6] = ["synth", "train", "prune", "stats", "overlay", "oracle"];

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Pgm,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Png => "png",
            Self::Pgm => "pgm",
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value = "page")]
    pub mode: SynthMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON generator spec; replaces the built-in spec for --mode.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ImageFormat::Png)]
    pub format: ImageFormat,
    /// Run manifest path [default: <out>/run.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 28)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub hidden_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Patches drawn per class before the holdout split.
    #[arg(long, default_value_t = 10_000)]
    pub per_class_cap: usize,
    #[arg(long, default_value_t = 0.1)]
    pub holdout: f64,
    /// Run manifest path [default: <out>.run.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct PruneArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Odd max-pool window applied to the foreground mask; 1 disables pooling.
    #[arg(long, default_value_t = 3)]
    pub pool: usize,
    #[arg(long, default_value = "preserved")]
    pub strategy: IndexStrategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output stem; writes <out>.ptok.json and <out>.ptok.bin
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest path [default: <out>.run.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct StatsArgs {
    /// Glob of PTOK1 manifests, e.g. 'out/*.ptok.json'
    #[arg(long)]
    pub tokens: String,
    /// Built-in profile name (3b-like, 7b-like) or path to a profile JSON.
    #[arg(long, default_value = "3b-like")]
    pub profile: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest path [default: <out>.run.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct OverlayArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Run manifest path [default: <out>.run.json]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (r, c) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected RxC, got {s:?}"))?;
        let rows = r.trim().parse().map_err(|_| format!("bad row count in {s:?}"))?;
        let cols = c.trim().parse().map_err(|_| format!("bad column count in {s:?}"))?;
        Ok(Self { rows, cols })
    }
}

#[derive(Args, Debug, Serialize)]
pub struct OracleArgs {
    #[arg(long, default_value = "8x8")]
    pub grid: GridSpec,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run manifest path [default: printed to stdout]
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Replaces `--config FILE` with the flags it defines, placed right after
/// the subcommand so that flags given on the command line take precedence.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let s = arg.to_string_lossy();
        if s == "--config" {
            let path = it.next().ok_or_else(|| Failure::usage("--config needs a file"))?;
            config = Some(PathBuf::from(path));
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(PathBuf::from(path));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let text = std::fs::read(&path).map_err(|e| Failure::io(path.display(), e))?;
    let value: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
    let obj = value.as_object().ok_or_else(|| Failure::usage("config file must hold a JSON object"))?;
    let mut injected = Vec::new();
    for (key, v) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        let text = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(true) => {
                injected.push(OsString::from(flag));
                continue;
            }
            serde_json::Value::Bool(false) | serde_json::Value::Null => continue,
            _ => return Err(Failure::usage(format!("config key {key:?} must be a string, number or bool"))),
        };
        injected.push(OsString::from(flag));
        injected.push(OsString::from(text));
    }
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .ok_or_else(|| Failure::usage("--config needs a subcommand"))?;
    rest.splice(at + 1..at + 1, injected);
    Ok(rest)
}

/// `PRUNEDOC_SEED`, when set, replaces `--seed`.
pub fn apply_seed_env(command: &mut Command) -> Result<(), Failure> {
    let Some(raw) = std::env::var_os(SEED_ENV) else {
        return Ok(());
    };
    let raw = raw.to_string_lossy();
    let seed: u64 = raw.trim().parse().map_err(|_| Failure::usage(format!("{SEED_ENV}={raw:?} is not a u64")))?;
    match command {
        Command::Synth(a) => a.seed = seed,
        Command::Train(a) => a.seed = seed,
        Command::Prune(a) => a.seed = seed,
        Command::Oracle(a) => a.seed = seed,
        Command::Stats(_) | Command::Overlay(_) => {}
    }
    Ok(())
}
