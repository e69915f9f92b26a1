//! `lbc`: batch front end for lidar odometry with learned bias correction.
//!
//! Exit codes: 0 success, 2 odometry finished with flagged frames,
//! 64 usage or configuration error, 65 malformed or inconsistent data,
//! 74 I/O failure.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Outcome, PathShape, PredictionSource, Preset, SequenceFiles, SynthArgs};
use config::{Overrides, PipelineConfig, DATA_ROOT_ENV};
use error::{CliError, EX_FLAGGED, EX_USAGE};

#[derive(Parser, Debug)]
#[command(name = "lbc", version, about = "Lidar odometry with learned GP bias correction")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML or JSON settings file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Error window length in frames.
    #[arg(long, global = true)]
    kappa: Option<usize>,
    #[arg(long, global = true, value_name = "FRACTION")]
    keypoint_fraction: Option<f64>,
    /// Neighbors per point for surface statistics.
    #[arg(long, global = true, value_name = "K")]
    knn_k: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run odometry over a directory of .bin sweeps.
    ///
    /// Writes poses.txt, diagnostics.csv and features.csv.
    Odom {
        /// Sequence directory, or a sequence id under $LBC_DATA_ROOT/sequences.
        sequence: String,
        #[arg(short, long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
    /// Compute the per-frame feature table of a sequence.
    Features {
        sequence: String,
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Window errors of an odometry trajectory against ground truth.
    Errors {
        #[arg(long, value_name = "POSES")]
        odom: String,
        #[arg(long, value_name = "POSES")]
        gt: String,
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Fit the z, pitch and roll error models.
    Train {
        /// A sequence id with its feature and error tables; repeatable.
        #[arg(long = "seq", num_args = 3, value_names = ["ID", "FEATURES", "ERRORS"], required = true)]
        sequences: Vec<String>,
        /// Sequence kept out of training and used for validation.
        #[arg(long)]
        holdout: Option<String>,
        #[arg(short, long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
    /// Apply predicted corrections to an odometry trajectory.
    Correct {
        #[arg(long, value_name = "POSES")]
        poses: String,
        /// Directory holding z.json, pitch.json and roll.json.
        #[arg(long, value_name = "DIR", required_unless_present = "predictions")]
        models: Option<PathBuf>,
        #[arg(long, value_name = "FILE", required_unless_present = "predictions")]
        features: Option<PathBuf>,
        /// Use window errors from this error table instead of model predictions.
        #[arg(long, value_name = "FILE", conflicts_with_all = ["models", "features"])]
        predictions: Option<PathBuf>,
        #[arg(short, long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Segment errors of a trajectory, optionally before and after correction.
    Eval {
        #[arg(long, value_name = "POSES")]
        odom: String,
        #[arg(long, value_name = "POSES")]
        gt: String,
        #[arg(long, value_name = "POSES")]
        corrected: Option<String>,
        /// Directory for report.json, report_corrected.json and per_length.csv.
        #[arg(short, long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic sequence with ground truth.
    Synth {
        /// Scene description (JSON); defaults to a built-in preset.
        #[arg(long, value_name = "FILE", conflicts_with = "preset")]
        scene: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "corridor")]
        preset: Preset,
        #[arg(long, value_enum, default_value = "straight")]
        path: PathShape,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        /// Distance between sweeps (m).
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        #[arg(short, long, value_name = "DIR")]
        output: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let g = &cli.global;
    let overrides = Overrides {
        keypoint_fraction: g.keypoint_fraction,
        knn_k: g.knn_k,
        kappa: g.kappa,
        seed: g.seed,
    };
    let env_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
    let cfg = PipelineConfig::load(g.config.as_deref(), env_root, &overrides)?;
    match cli.command {
        Command::Odom { sequence, output } => {
            let dir = output_dir(&cfg, output, "odom")?;
            return commands::odom(&cfg, &sequence, &dir);
        }
        Command::Features { sequence, output } => {
            let out = cfg.output_path(output, "features.csv")?;
            commands::features(&cfg, &sequence, &out)?;
        }
        Command::Errors { odom, gt, output } => {
            let out = cfg.output_path(output, "errors.csv")?;
            commands::errors(&cfg, &odom, &gt, &out)?;
        }
        Command::Train {
            sequences,
            holdout,
            output,
        } => {
            let files: Vec<SequenceFiles> = sequences
                .chunks_exact(3)
                .map(|c| SequenceFiles {
                    id: c[0].clone(),
                    features: c[1].clone().into(),
                    errors: c[2].clone().into(),
                })
                .collect();
            let dir = match output.or_else(|| cfg.model_dir.clone()) {
                Some(d) => d,
                None => output_dir(&cfg, None, "models")?,
            };
            commands::train(&cfg, &files, holdout.as_deref(), &dir)?;
        }
        Command::Correct {
            poses,
            models,
            features,
            predictions,
            output,
        } => {
            let source = match (predictions, models.or_else(|| cfg.model_dir.clone()), features) {
                (Some(p), _, _) => PredictionSource::Table(p),
                (None, Some(dir), Some(features)) => PredictionSource::Models { dir, features },
                _ => return Err(CliError::Usage("--models and --features are required".into())),
            };
            let out = cfg.output_path(output, "corrected.txt")?;
            commands::correct(&cfg, &poses, &source, &out)?;
        }
        Command::Eval {
            odom,
            gt,
            corrected,
            output,
        } => {
            let dir = output.or_else(|| cfg.output_dir.clone());
            let (before, after) = commands::eval(&cfg, &odom, &gt, corrected.as_deref(), dir.as_deref())?;
            match after {
                Some(after) => {
                    println!("{:>8} {:>10} {:>10}", "length", "before %", "after %");
                    for (len, b) in &before.per_length {
                        let a = after.per_length.get(len).map(|v| format!("{v:.4}")).unwrap_or_default();
                        println!("{len:>8} {b:>10.4} {a:>10}");
                    }
                    println!("{:>8} {:>10.4} {:>10.4}", "total", before.total, after.total);
                }
                None => println!("{}", before.to_json()),
            }
        }
        Command::Synth {
            scene,
            preset,
            path,
            frames,
            step,
            output,
        } => {
            let dir = output_dir(&cfg, output, "synth")?;
            let args = SynthArgs {
                scene,
                preset,
                path,
                frames,
                step,
            };
            commands::synth(&cfg, &args, &dir)?;
        }
    }
    Ok(Outcome::Clean)
}

fn output_dir(cfg: &PipelineConfig, explicit: Option<PathBuf>, sub: &str) -> Result<PathBuf, CliError> {
    explicit
        .or_else(|| cfg.output_dir.as_ref().map(|d| d.join(sub)))
        .ok_or_else(|| CliError::Usage("no output directory given (use --output or output_dir)".into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(EX_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Flagged(n)) => {
            log::warn!("{n} frames were flagged");
            ExitCode::from(EX_FLAGGED)
        }
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
