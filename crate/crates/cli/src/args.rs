use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use seaice_core::train::ModelSpec;

use crate::error::{CliError, Result};

#[derive(Parser)]
#[command(name = "seaice", version, about = "Sea-ice patch classification pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic corpus of scene/label files.
    GenSynthetic(GenArgs),
    /// Cut scenes into labelled patches and write an unsplit manifest.
    Tile(TileArgs),
    /// Assign whole spatial blocks of a manifest to train or val.
    Split(SplitArgs),
    /// Per-channel normalization statistics from the train split.
    Stats(StatsArgs),
    /// Train a classifier; writes a checkpoint and a CSV log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split; writes confusion matrix and metrics.
    Eval(EvalArgs),
    /// Train and evaluate CE, W-CE and focal runs on the same data.
    Experiment(ExperimentArgs),
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing --{flag} (flag or config key)")))
}

fn parse_model(s: &str) -> std::result::Result<ModelSpec, String> {
    Ok(ModelSpec::Preset(s.to_string()))
}

macro_rules! overlay {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl $ty {
            /// Fills flags left unset from the `--config` file.
            pub fn resolved(self) -> Result<Self> {
                let file: Self = match &self.config {
                    Some(path) => load_json(path)?,
                    None => return Ok(self),
                };
                Ok(Self {
                    config: self.config,
                    $($field: self.$field.or(file.$field)),*
                })
            }
        }
    };
}

#[derive(Args)]
pub struct GenArgs {
    /// Number of scenes.
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Edge of the square single-class cells, in pixels.
    #[arg(long)]
    pub cell_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Corpus description JSON; any field may be omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TileArgs {
    /// Directory holding `<scene>.scn` / `<scene>.lbl` pairs.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Minimum majority-class fraction.
    #[arg(long)]
    pub purity: Option<f64>,
    /// Block edge in patches.
    #[arg(long)]
    pub block_size: Option<usize>,
    /// SA-code table; the six-class default is built in.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Manifest CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(TileArgs {
    scenes,
    patch_size,
    purity,
    block_size,
    taxonomy,
    seed,
    out
});

#[derive(Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fraction of patches targeted for train.
    #[arg(long)]
    pub ratio: Option<f64>,
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Maximum L1 class-proportion divergence.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(SplitArgs {
    manifest,
    ratio,
    block_size,
    tolerance,
    seed,
    out
});

#[derive(Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Only `train` is accepted.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(StatsArgs {
    manifest,
    scenes,
    split,
    seed,
    out
});

#[derive(Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// Preset name (`vit_test`, `vit_base`, `vit_large`); a config file may
    /// instead give a full architecture object.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelSpec>,
    /// `ce`, `wce` or `focal`.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Record elapsed time in the log; `false` writes 0 for reproducible logs.
    #[arg(long)]
    pub wall_time: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory for `checkpoint.bin` and `train_log.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(TrainArgs {
    manifest,
    scenes,
    stats,
    taxonomy,
    model,
    loss,
    gamma,
    lr,
    batch_size,
    steps,
    wall_time,
    seed,
    out
});

#[derive(Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// `val` (default) or `train`.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory for the report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(EvalArgs {
    checkpoint,
    manifest,
    scenes,
    stats,
    taxonomy,
    split,
    seed,
    out
});

/// One training objective in an experiment.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub name: String,
    pub loss: String,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelSpec>,
    /// Focal gamma for runs that do not set their own.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Class whose recall and precision are reported, by name or index.
    #[arg(long)]
    pub minority_class: Option<String>,
    #[arg(long)]
    pub wall_time: Option<bool>,
    /// Runs in table order; config file only. Defaults to ce, wce, focal.
    #[arg(skip)]
    pub runs: Option<Vec<RunSpec>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
overlay!(ExperimentArgs {
    manifest,
    scenes,
    stats,
    taxonomy,
    model,
    gamma,
    lr,
    batch_size,
    steps,
    minority_class,
    wall_time,
    runs,
    seed,
    out
});
