//! `imetricgan`: prepare data, train, enhance, evaluate and report.

mod commands;
mod config;
mod error;
mod results;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::EXIT_USAGE;

#[derive(Debug, Parser)]
#[command(name = "imetricgan", version, about = "Near-end listening enhancement with a metric-surrogate GAN")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mix speech with maskers over an SNR grid and write a manifest.
    Prepare(PrepareArgs),
    /// Write a synthetic speech and noise corpus.
    SynthToy(SynthToyArgs),
    /// Train a model into a run directory.
    Train(TrainArgs),
    /// Enhance speech for playback in a given masker.
    Enhance(EnhanceArgs),
    /// Score plain, reference-modified and model-enhanced speech.
    Evaluate(EvaluateArgs),
    /// Average a results CSV per condition.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Directory of speech WAV files.
    #[arg(long)]
    pub speech_dir: PathBuf,
    /// Directory of masker WAV files.
    #[arg(long)]
    pub noise_dir: PathBuf,
    /// Output directory (manifest.jsonl, mixtures/, examples/).
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated SNRs in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5,0,5")]
    pub snr: Vec<f64>,
    /// Seed for splits, masker choice and crops.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write reference-modified examples for each speech file.
    #[arg(long)]
    pub with_examples: bool,
    /// Fraction of speech files in the held-out split.
    #[arg(long, default_value_t = 0.2)]
    pub heldout_fraction: f64,
    /// Fraction of speech files in the test split.
    #[arg(long, default_value_t = 0.0)]
    pub test_fraction: f64,
}

#[derive(Debug, Args)]
pub struct SynthToyArgs {
    /// Output directory (speech/ and noise/ are created inside).
    #[arg(long)]
    pub out: PathBuf,
    /// Number of speech files.
    #[arg(long, default_value_t = 50)]
    pub n_speech: usize,
    /// Number of masker files.
    #[arg(long, default_value_t = 2)]
    pub n_noise: usize,
    /// Synthesis seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Manifest; overrides paths.manifest from the config.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Run directory; overrides paths.run_dir from the config.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Validate the configuration and print parameter counts without training.
    #[arg(long)]
    pub dry_run: bool,
    /// Continue from the newest checkpoint in the run directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    /// Checkpoint file.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Speech WAV (single-file mode).
    #[arg(long, requires_all = ["noise", "out"], conflicts_with = "manifest")]
    pub speech: Option<PathBuf>,
    /// Masker WAV at playback level; longer maskers are cropped.
    #[arg(long)]
    pub noise: Option<PathBuf>,
    /// Output WAV (single-file mode).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Manifest (batch mode).
    #[arg(long, requires = "out_dir")]
    pub manifest: Option<PathBuf>,
    /// Split to enhance in batch mode.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Output directory in batch mode.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Seed of the masker crop in single-file mode.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Manifest; defaults to the run directory's copy.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Checkpoint for the model condition; defaults to the newest in the run directory.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Run directory; results.csv is written there unless --out is given.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Split to score.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// SIIB value (bits/s) mapped to a normalized score of 1.
    #[arg(long, default_value_t = imetricgan::metrics::DEFAULT_R_MAX)]
    pub r_max: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results CSV from `evaluate`.
    #[arg(long)]
    pub results: PathBuf,
    /// Where to write the per-condition means as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("error[usage]: invalid command line");
                let _ = e.print();
                return ExitCode::from(EXIT_USAGE as u8);
            }
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    let out = match cli.command {
        Command::Prepare(a) => commands::prepare(&a),
        Command::SynthToy(a) => commands::synth_toy(&a),
        Command::Train(a) => commands::train(&a),
        Command::Enhance(a) => commands::enhance(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Report(a) => commands::report(&a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.prefix());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
