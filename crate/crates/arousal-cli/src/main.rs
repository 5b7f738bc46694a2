//! `arousal`: command-line front end for the arousal-core pipeline.
//!
//! Subcommands cover the pipeline stages end to end: `tapers` builds and
//! caches the taper family, `psd` exports one epoch's spectrum, `slope`
//! extracts per-epoch slope features, `classify` stages a whole recording,
//! `evaluate` scores predictions against a hypnogram, `synth` writes
//! synthetic recordings, and `bench` reports per-stage timings and taper
//! storage footprints.
//!
//! Exit codes: 0 on success, 2 for unparseable input data, 3 for rejected
//! configuration or requests, 4 for file-system trouble, 1 for internal
//! errors. Command-line usage errors exit with clap's conventional 2.

mod commands;
mod config;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use arousal_core::ErrorClass;
use clap::{Args, Parser, Subcommand};

use config::ConfigArgs;

#[derive(Parser)]
#[command(
    name = "arousal",
    version,
    about = "EEG arousal-state estimation from the multitaper spectral slope"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the taper family, write it to a cache file, and print a
    /// JSON summary (taper count, concentrations, density when sparse).
    Tapers(TapersArgs),
    /// Export one epoch's power spectral density as CSV or JSON.
    Psd(PsdArgs),
    /// Extract per-epoch spectral-slope features as CSV.
    Slope(SlopeArgs),
    /// Stage every epoch of a recording, one CSV row per epoch.
    Classify(ClassifyArgs),
    /// Score staged epochs against a hypnogram and print a JSON report.
    Evaluate(EvaluateArgs),
    /// Write a synthetic power-law recording as EDF or CSV.
    Synth(SynthArgs),
    /// Time the pipeline stages and report taper storage, as JSON.
    Bench(BenchArgs),
}

#[derive(Args)]
struct TapersArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Directory the cache file is written into.
    #[arg(long, default_value = ".")]
    cache_dir: PathBuf,
}

#[derive(Args)]
struct PsdArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Recording to read (.edf or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Zero-based epoch to export.
    #[arg(long, default_value_t = 0)]
    epoch: usize,
    /// Emit a JSON record with epoch metadata instead of bare CSV.
    #[arg(long)]
    json: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SlopeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Recording to read (.edf or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Worker threads for epoch processing; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Recording to read (.edf or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Emit the two-state arousal label instead of the sleep stage.
    #[arg(long)]
    binary: bool,
    /// Worker threads for epoch processing; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Recording to read (.edf or .csv).
    #[arg(long)]
    input: PathBuf,
    /// Hypnogram sidecar (`onset_s,duration_s,stage` CSV).
    #[arg(long)]
    hypnogram: PathBuf,
    /// Score the two-state arousal task instead of three-way staging.
    #[arg(long)]
    binary: bool,
    /// Worker threads for epoch processing; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Power-law exponent: one-sided PSD proportional to f^(-beta).
    #[arg(long)]
    beta: f64,
    /// Length of the synthetic recording, seconds.
    #[arg(long)]
    duration_s: f64,
    /// Sample rate of the written recording, Hz.
    #[arg(long, default_value_t = 200.0)]
    rate: f64,
    /// Generator seed; identical flags and seed give identical bytes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Population variance the signal is scaled to.
    #[arg(long, default_value_t = 1.0)]
    variance: f64,
    /// Channel label of the written signal.
    #[arg(long, default_value = "Cz")]
    channel: String,
    /// Output path; the extension picks the format (.edf or .csv).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Epochs in the timing corpus.
    #[arg(long, default_value_t = 120)]
    epochs: usize,
    /// Truncation threshold for the sparse-storage comparison.
    #[arg(long, default_value_t = 1e-6)]
    sparse_epsilon: f64,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Parse => 2,
        ErrorClass::Validation => 3,
        ErrorClass::Io => 4,
        ErrorClass::Internal => 1,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tapers(args) => commands::tapers(args),
        Command::Psd(args) => commands::psd(args),
        Command::Slope(args) => commands::slope(args),
        Command::Classify(args) => commands::classify(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Synth(args) => commands::synth(args),
        Command::Bench(args) => commands::bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(err.class()))
        }
    }
}
