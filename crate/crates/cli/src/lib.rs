//! Command-line front end: corpus synthesis, dataset building, training,
//! denoising, evaluation and latency benchmarking.
//!
//! Exit codes: 0 success, 1 other failure, 2 bad arguments or config,
//! 3 unreadable input, 4 missing or mismatched weights.

mod bench;

pub use bench::{run_bench, BenchMode, BenchReport, WARMUP_FRAMES};

use std::fmt;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use dtln_core::data::{
    build_dataset, read_wav, synth, write_wav, DatasetManifest, ManifestEntry, Split,
};
use dtln_core::model::{enhance_with, load_weights, save_weights, Mode};
use dtln_core::train::{evaluate, train, TrainConfig, CHECKPOINT_FILE};
use dtln_core::{build_model, AudioBuffer, Error, ModelParams, TopologySpec};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_BAD_ARGS: u8 = 2;
pub const EXIT_BAD_INPUT: u8 = 3;
pub const EXIT_BAD_WEIGHTS: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "dtln",
    version,
    about = "Real-time speech enhancement with stacked dual-transform LSTMs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Stream,
    Sequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance a 16 kHz mono WAV file; the output has the input's length.
    Denoise {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "stream")]
        mode: ModeArg,
    },
    /// Time per-frame inference on synthetic noise.
    Bench {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        #[arg(long, value_enum, default_value = "stream")]
        mode: ModeArg,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a `key = value` config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Mix speech and noise directories into 15 s training pairs.
    BuildDataset {
        #[arg(long)]
        speech: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Score enhanced and unprocessed mixtures of a manifest (SI-SDR, STOI).
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
    },
    /// Write procedural speech and noise WAV files for dataset building.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        speech_files: usize,
        #[arg(long, default_value_t = 24)]
        noise_files: usize,
        #[arg(long, default_value_t = 30.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write freshly initialized weights for a topology.
    InitWeights {
        #[arg(long, default_value = "DTLN")]
        topology: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out")]
        output: PathBuf,
    },
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

/// Exit code for an error from a module operation.
fn classify(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::UnknownTopology(_) | Error::Config { .. } => {
            EXIT_BAD_ARGS
        }
        Error::NotAWeightFile
        | Error::UnsupportedVersion(_)
        | Error::TopologyMismatch { .. }
        | Error::TensorMismatch { .. }
        | Error::Truncated => EXIT_BAD_WEIGHTS,
        Error::UnsupportedSampleRate(_)
        | Error::Multichannel(_)
        | Error::UnsupportedFormat(_)
        | Error::MalformedWav(_)
        | Error::EmptyAudio
        | Error::Manifest { .. }
        | Error::Io { .. }
        | Error::InsufficientMaterial(_) => EXIT_BAD_INPUT,
        _ => EXIT_FAILURE,
    }
}

fn module(e: Error) -> CliError {
    CliError::new(classify(&e), e)
}

fn weights(path: &PathBuf) -> Result<ModelParams, CliError> {
    load_weights(path).map_err(|e| CliError::new(EXIT_BAD_WEIGHTS, e))
}

fn input(path: &PathBuf) -> Result<AudioBuffer, CliError> {
    read_wav(path).map_err(|e| CliError::new(EXIT_BAD_INPUT, e))
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stream => Mode::Stream,
            ModeArg::Sequence => Mode::Sequence,
        }
    }
}

impl From<ModeArg> for BenchMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Stream => BenchMode::Stream,
            ModeArg::Sequence => BenchMode::Sequence,
        }
    }
}

/// Runs one command, printing its summary to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Denoise {
            weights: w,
            input: i,
            output,
            mode,
        } => {
            let params = weights(&w)?;
            let noisy = input(&i)?;
            let enhanced = enhance_with(&params, noisy.samples(), mode.into()).map_err(module)?;
            let out = AudioBuffer::from_samples(enhanced).map_err(module)?;
            write_wav(&output, &out).map_err(module)?;
            println!("wrote {} samples to {}", out.len(), output.display());
        }
        Command::Bench {
            weights: w,
            seconds,
            mode,
            csv,
            seed,
        } => {
            let params = weights(&w)?;
            let report = run_bench(&params, seconds, mode.into(), seed)
                .map_err(|e| CliError::new(EXIT_BAD_ARGS, e))?;
            print!("{}", report.to_text());
            if let Some(path) = csv {
                fs::write(&path, report.to_csv())
                    .map_err(|e| CliError::new(EXIT_FAILURE, Error::Io { path, source: e }))?;
            }
        }
        Command::Train { config } => {
            let cfg = TrainConfig::from_file(&config).map_err(|e| match e {
                Error::Io { .. } => CliError::new(EXIT_BAD_INPUT, e),
                other => CliError::new(EXIT_BAD_ARGS, other),
            })?;
            let (_, log) = train(&cfg).map_err(module)?;
            let best = log.best_epoch.unwrap_or(0);
            println!(
                "trained {} epochs (best epoch {best}{}), checkpoint {}",
                log.epochs.len(),
                if log.stopped_early {
                    ", stopped early"
                } else {
                    ""
                },
                cfg.checkpoint_dir.join(CHECKPOINT_FILE).display()
            );
            if log.skipped_files > 0 {
                println!("skipped {} unreadable files", log.skipped_files);
            }
        }
        Command::BuildDataset {
            speech,
            noise,
            hours,
            out,
            seed,
        } => {
            let manifest = build_dataset(&speech, &noise, hours, &out, seed).map_err(module)?;
            println!(
                "wrote {} pairs ({} train, {} val) and {}",
                manifest.entries.len(),
                manifest.count(Split::Train),
                manifest.count(Split::Val),
                out.join("manifest.tsv").display()
            );
        }
        Command::Eval {
            weights: w,
            manifest,
            output,
            split,
        } => {
            let params = weights(&w)?;
            let manifest =
                DatasetManifest::read(&manifest).map_err(|e| CliError::new(EXIT_BAD_INPUT, e))?;
            let entries: Vec<ManifestEntry> = match split {
                SplitArg::All => manifest.entries.clone(),
                SplitArg::Train => manifest.split(Split::Train).cloned().collect(),
                SplitArg::Val => manifest.split(Split::Val).cloned().collect(),
            };
            let report = evaluate(&params, &entries, Some(&output)).map_err(module)?;
            for m in &report.missing {
                eprintln!("missing: {}", m.display());
            }
            println!(
                "{} files: SI-SDR {:.2} dB (noisy {:.2} dB), STOI {:.4} (noisy {:.4})",
                report.count(),
                report.mean_si_sdr(),
                report.mean_noisy_si_sdr(),
                report.mean_stoi(),
                report.mean_noisy_stoi()
            );
        }
        Command::SynthCorpus {
            out,
            speech_files,
            noise_files,
            seconds,
            seed,
        } => {
            synth::write_corpus(&out, speech_files, noise_files, seconds, seed).map_err(module)?;
            println!(
                "wrote {speech_files} speech and {noise_files} noise files to {}",
                out.display()
            );
        }
        Command::InitWeights {
            topology,
            seed,
            output,
        } => {
            let spec = TopologySpec::named(&topology).map_err(module)?;
            let params = build_model(&spec, seed).map_err(module)?;
            save_weights(&params, &output).map_err(module)?;
            println!(
                "wrote {} ({} parameters) to {}",
                spec.name,
                params.num_params(),
                output.display()
            );
        }
    }
    Ok(())
}
