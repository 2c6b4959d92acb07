use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "bcg",
    version,
    about = "BCG J-peak transforms, detection and evaluation"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "BCG_CONFIG")]
    pub config: Option<PathBuf>,

    /// Override one config key, e.g. `--set transforms.bcr.t_ms=250`.
    /// Repeatable; applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,

    /// Records processed in parallel (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write every trace variant of each record to `<record>.traces.csv`.
    Transform(RecordArgs),
    /// Run the J rules and label cycles: `<record>.beats.csv` and
    /// `<record>.markers.csv`.
    Detect(RecordArgs),
    /// Full evaluation: report JSON plus the beats, traces and markers CSVs.
    Eval(RecordArgs),
    /// Generate synthetic ECG/BCG records.
    Synth(SynthArgs),
    /// Summarise report JSON files into `compare.csv`.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Record CSV files, or directories searched for `*.csv` records.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    /// Output directory (created if missing).
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,

    /// Sampling rate in Hz; overrides any `# fs=` header.
    #[arg(long)]
    pub fs: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Default,
    SharperI,
    BuriedK,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output CSV file, or a directory when `--count` is above one.
    #[arg(short, long)]
    pub out: PathBuf,

    /// Number of records; record n uses seed `seed + n`.
    #[arg(long, default_value_t = 1)]
    pub count: u64,

    /// Complex template; replaces the configured one.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub fs: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub hr_bpm: Option<f64>,
    #[arg(long)]
    pub hrv_jitter_ms: Option<f64>,
    #[arg(long)]
    pub shorter_j_fraction: Option<f64>,
    #[arg(long)]
    pub k_band_energy: Option<f64>,
    #[arg(long)]
    pub noise_snr_db: Option<f64>,

    /// Also write the planted fiducials to `<record>.truth.csv`.
    #[arg(long)]
    pub truth: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Report JSON files, or directories searched for `*.report.json`.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,

    /// Output file.
    #[arg(short, long, default_value = "compare.csv")]
    pub out: PathBuf,
}
