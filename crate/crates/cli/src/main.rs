use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod dataset;

use weldscan::config::PipelineConfig;

/// Synthetic laser thermography of spot welds: simulation, normalization,
/// frame filtering, augmentation, training and evaluation.
#[derive(Debug, Parser)]
#[command(name = "weldscan", version)]
pub struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset of raw films with a manifest.
    Simulate {
        #[arg(long)]
        films: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the mean intensity curve of films as CSV.
    Curve {
        /// Film files or directories of films.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output directory; prints to stdout when omitted and a single film is given.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalize raw films.
    Normalize {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Filter frames, split films and augment the training images.
    Prepare {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[arg(long)]
        filter: Option<String>,
        /// none, positional, color or positional+color.
        #[arg(long)]
        augment: Option<String>,
        #[arg(long)]
        multiplier: Option<usize>,
        #[arg(long, num_args = 3, value_names = ["TRAIN", "VAL", "TEST"])]
        split: Option<Vec<f64>>,
        /// Report counts without writing images.
        #[arg(long)]
        count_only: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a classifier on a prepared dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split of a prepared dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare frame filters or augmentation settings over several seeds.
    Ablate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Filters of a filter ablation.
        #[arg(long, value_delimiter = ',', conflicts_with = "augmentations")]
        filters: Option<Vec<String>>,
        /// Augmentation settings of an augmentation ablation on --filter.
        #[arg(long, value_delimiter = ',')]
        augmentations: Option<Vec<String>>,
        #[arg(long)]
        filter: Option<String>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        frames_per_film: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write colormapped frames of a film as PNG.
    ExportFrames {
        input: PathBuf,
        /// 1-based frame numbers.
        #[arg(long, value_delimiter = ',', required = true)]
        frames: Vec<usize>,
        #[command(flatten)]
        pre: PreprocessArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Directory of .tfilm or .nfilm files, or a single film.
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Cold reference frames, inclusive.
    #[arg(long, num_args = 2, value_names = ["FIRST", "LAST"])]
    pub t0: Option<Vec<usize>>,
    #[arg(long)]
    pub t_norm: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// small or medium.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub class_weights: bool,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Core(weldscan::Error),
}

impl From<weldscan::Error> for Failure {
    fn from(e: weldscan::Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use weldscan::Error::*;
        match self {
            Failure::Usage(_) | Failure::Core(InvalidParameter(_) | Domain(_)) => 1,
            Failure::Core(Numeric(_)) => 3,
            Failure::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                Failure::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            PipelineConfig::from_json(&text)
                .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = load_config(&cli).and_then(|cfg| commands::run(cli.command, cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
