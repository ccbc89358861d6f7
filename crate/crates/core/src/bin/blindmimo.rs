use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blindmimo::harness::{
    emit_plots_from_csv, load_denoiser, run_sweep, train_denoiser_to, EstimatorKind,
    ExperimentConfig, MetricRecord, Profile,
};
use blindmimo::{Error, Result};

#[derive(Parser)]
#[command(
    name = "blindmimo",
    version,
    about = "Blind virtual-pilot channel estimation simulator"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Built-in parameter set.
    #[arg(long, global = true, default_value = "desk", value_parser = parse_profile)]
    profile: Profile,
    /// TOML configuration file; replaces the profile.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Runs the configured sweep and writes one CSV row per operating point.
    Simulate {
        /// Result file.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        /// Keep rows already in the output file and skip their points.
        #[arg(long)]
        resume: bool,
        /// Overrides frames per point.
        #[arg(long)]
        frames: Option<usize>,
        /// Comma-separated estimators (blind, blind+dncnn, data_aided).
        #[arg(long, value_delimiter = ',', value_parser = parse_estimator)]
        estimators: Option<Vec<EstimatorKind>>,
        /// Denoiser weights, needed for blind+dncnn.
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
    },
    /// Generates a training set and trains the denoiser.
    TrainDenoiser {
        /// Output weights file (defaults to the configured path).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Overrides the epoch count.
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compares all three estimators with trained weights.
    Evaluate {
        /// Denoiser weights (defaults to the configured path).
        #[arg(long, value_name = "FILE")]
        weights: Option<PathBuf>,
        /// Result file.
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
        /// Overrides frames per point.
        #[arg(long)]
        frames: Option<usize>,
        /// Keep rows already in the output file and skip their points.
        #[arg(long)]
        resume: bool,
    },
    /// Writes matplotlib scripts for result CSV files.
    Plot {
        /// Result files to combine.
        #[arg(long, value_name = "CSV", required = true, num_args = 1..)]
        csv: Vec<PathBuf>,
        /// Where the scripts go.
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
    },
    /// Prints the effective configuration as TOML.
    ShowConfig,
}

fn parse_profile(s: &str) -> std::result::Result<Profile, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_estimator(s: &str) -> std::result::Result<EstimatorKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::profile(g.profile),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn print_summary(records: &[MetricRecord]) {
    println!(
        "{:<12} {:>6} {:>8} {:>12} {:>12} {:>12} {:>10}",
        "estimator", "M", "SNR(dB)", "channel_mse", "pilot_ser", "ber", "tput"
    );
    for r in records {
        println!(
            "{:<12} {:>6} {:>8.1} {:>12.3e} {:>12.3e} {:>12.3e} {:>10.3}",
            r.estimator.name(),
            r.n_antennas,
            r.snr_db,
            r.channel_mse,
            r.pilot_ser,
            r.ber,
            r.throughput
        );
    }
}

fn sweep(cfg: &ExperimentConfig, weights: Option<&Path>, out: &Path, resume: bool) -> Result<()> {
    let model = if cfg.needs_denoiser() {
        let path = weights.unwrap_or(&cfg.denoiser.weights);
        Some(load_denoiser(cfg, path)?)
    } else {
        None
    };
    let records = run_sweep(cfg, out, resume, model.as_ref())?;
    print_summary(&records);
    println!("wrote {} rows to {}", records.len(), out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Simulate {
            out,
            resume,
            frames,
            estimators,
            weights,
        } => {
            if let Some(f) = frames {
                cfg.frames_per_point = f;
            }
            if let Some(e) = estimators {
                cfg.estimators = e;
            }
            sweep(&cfg, weights.as_deref(), &out, resume)
        }
        Command::TrainDenoiser { out, epochs } => {
            if let Some(e) = epochs {
                cfg.denoiser.train.epochs = e;
            }
            let path = out.unwrap_or_else(|| cfg.denoiser.weights.clone());
            let report = train_denoiser_to(&cfg, &path)?;
            println!(
                "{:>5} {:>12} {:>12} {:>10}",
                "epoch", "train_loss", "val_loss", "lr"
            );
            for (e, v) in report.val_loss.iter().enumerate() {
                let t = if e == 0 {
                    f64::NAN
                } else {
                    report.train_loss[e - 1]
                };
                let lr = if e == 0 { f64::NAN } else { report.lr[e - 1] };
                println!("{e:>5} {t:>12.4e} {v:>12.4e} {lr:>10.2e}");
            }
            println!(
                "best epoch {}: val loss {:.4e}, {:.3} of the input residual MSE {:.4e}",
                report.best_epoch,
                report.best_val_loss(),
                report.val_ratio(),
                report.val_input_mse
            );
            println!("saved weights to {}", path.display());
            Ok(())
        }
        Command::Evaluate {
            weights,
            out,
            frames,
            resume,
        } => {
            if let Some(f) = frames {
                cfg.frames_per_point = f;
            }
            cfg.estimators = EstimatorKind::ALL.to_vec();
            sweep(&cfg, weights.as_deref(), &out, resume)
        }
        Command::Plot { csv, out_dir } => {
            for p in emit_plots_from_csv(&csv, &out_dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.global.quiet {
        "warn"
    } else {
        ["info", "debug", "trace"][usize::from(cli.global.verbose.min(2))]
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
