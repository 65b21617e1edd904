//! Argument handling and subcommands of the `leafsift` binary.
//!
//! Exit status: 0 on success, 1 for usage and configuration errors, 2 for
//! data errors (unreadable or malformed inputs, failed processing).

mod commands;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use leafsift_core::{Error, PipelineConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Environment variable that overrides the configured worker count.
pub const THREADS_ENV: &str = "LEAFSIFT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "leafsift", version, about = "Leaf-disease image pipeline: segmentation, SIFT patches, CNN inference")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// INI-style configuration file
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting, e.g. `--set sift.contrast_threshold=0.03`
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads (also LEAFSIFT_THREADS)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for every random choice
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blacken the studio background of one image
    Segment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write the foreground mask (white = leaf)
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// List SIFT keypoints as CSV
    Keypoints {
        #[arg(long)]
        input: PathBuf,
        /// Remove the background before detection
        #[arg(long)]
        masked: bool,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cut keypoint patches from every image of a dataset
    Patch {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the labeled index with its train/val split
    Index {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the CNN-LBP network on extracted or synthetic patches
    TrainToy {
        /// Directory holding manifest.csv from `leafsift patch`
        #[arg(long)]
        patches: Option<PathBuf>,
        /// Weight file to write
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Stop once validation accuracy reaches this value
        #[arg(long)]
        stop_at: Option<f64>,
        /// Side of the synthetic patches used without --patches
        #[arg(long, default_value_t = 32)]
        synthetic_side: usize,
    },
    /// Classify one image
    Infer {
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        /// Class names: comma-separated list
        #[arg(long, conflicts_with = "index")]
        classes: Option<String>,
        /// Take class names from an index CSV
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Metrics from a predictions CSV and the index it was made from
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Model name for the metrics row
        #[arg(long, default_value = "model")]
        model: String,
        /// Write metrics.csv and report.svg here as well
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter and MAC counts per layer
    Costs {
        #[arg(long)]
        arch: String,
        #[arg(long, default_value_t = 10)]
        classes: usize,
    },
    /// Classify a dataset and write predictions, metrics and an SVG report
    Report {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        arch: Option<String>,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Items to classify: val, train or all
        #[arg(long, default_value = "val")]
        split: String,
    },
}

/// Failure of a subcommand, carrying its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Data(_) => EXIT_DATA,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::UnknownArchitecture(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

/// Configuration with precedence: defaults < file < `--set` < worker flag
/// or environment.
pub fn resolve_config(global: &GlobalArgs, env_threads: Option<&str>) -> Result<PipelineConfig, Failure> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &global.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_ini(&text)?;
    }
    for o in &global.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(w) = global.workers {
        cfg.workers = w;
    } else if let Some(v) = env_threads {
        cfg.workers = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    let env_threads = std::env::var(THREADS_ENV).ok();
    let result =
        resolve_config(&cli.global, env_threads.as_deref()).and_then(|cfg| commands::dispatch(&cli, &cfg, out));
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Data(msg)) = &f;
            let _ = writeln!(err, "leafsift: {msg}");
            f.code()
        }
    }
}

/// Entry point used by the binary: real arguments and standard streams.
pub fn run_subcommand(argv: &[String]) -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}
