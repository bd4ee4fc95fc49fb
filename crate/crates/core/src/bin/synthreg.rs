use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use synthreg::pipeline::{
    cmd_evaluate, cmd_generate, cmd_losses, cmd_sweep, DatasetConfig, EvaluateConfig, LossesConfig, Resolution,
    SweepConfig,
};
use synthreg::Error;

#[derive(Parser)]
#[command(name = "synthreg", version, about = "Synthetic multimodal liver phantoms and registration sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate phantoms in both respiratory states for every modality.
    Generate {
        #[command(flatten)]
        common: Common,
        /// desk (2 mm) or paper (1 x 1 x 2 mm).
        #[arg(long)]
        resolution: Option<Resolution>,
        #[arg(long)]
        n_models: Option<usize>,
    },
    /// Register inhale images to the exhale CT over all settings.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Image-quality metrics of a generated dataset.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Dataset whose pooled histograms and spectra serve as reference.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Generator loss terms between RVOL slices (debugging aid).
    Losses {
        #[command(flatten)]
        common: Common,
    },
}

fn load_or_default<T: Default>(path: &Option<PathBuf>, load: impl Fn(&PathBuf) -> synthreg::Result<T>) -> synthreg::Result<T> {
    match path {
        Some(p) => load(p),
        None => Ok(T::default()),
    }
}

enum Outcome {
    Done,
    Partial,
}

fn run(cli: Cli) -> synthreg::Result<Outcome> {
    match cli.command {
        Command::Generate {
            common,
            resolution,
            n_models,
        } => {
            let mut cfg = load_or_default(&common.config, |p| DatasetConfig::load(p))?;
            if let Some(o) = common.out {
                cfg.output_dir = o;
            }
            if let Some(w) = common.workers {
                cfg.workers = w;
            }
            if let Some(s) = common.seed {
                cfg.base_seed = s;
            }
            if let Some(r) = resolution {
                cfg.resolution = r;
            }
            if let Some(n) = n_models {
                cfg.n_models = n;
            }
            let s = cmd_generate(&cfg)?;
            println!(
                "generated {} models, {} up to date, {} failed",
                s.written.len(),
                s.skipped.len(),
                s.failed.len()
            );
            Ok(if s.is_complete() { Outcome::Done } else { Outcome::Partial })
        }
        Command::Sweep { common, dataset } => {
            let mut cfg = load_or_default(&common.config, |p| SweepConfig::load(p))?;
            if let Some(d) = dataset {
                cfg.dataset_dir = d;
            }
            if let Some(o) = common.out {
                cfg.output_dir = Some(o);
            }
            if let Some(w) = common.workers {
                cfg.workers = w;
            }
            if let Some(s) = common.seed {
                cfg.registration.sampling_seed = s;
            }
            let s = cmd_sweep(&cfg)?;
            println!("{} rows, {} failed, written to {}", s.rows.len(), s.failed_rows(), cfg.output_dir().display());
            Ok(if s.failed_rows() == 0 { Outcome::Done } else { Outcome::Partial })
        }
        Command::Evaluate {
            common,
            dataset,
            reference,
        } => {
            let mut cfg = match &common.config {
                Some(p) => EvaluateConfig::load(p)?,
                None => EvaluateConfig::new("dataset"),
            };
            if let Some(d) = dataset {
                cfg.dataset_dir = d;
            }
            if let Some(o) = common.out {
                cfg.output_dir = Some(o);
            }
            if reference.is_some() {
                cfg.reference_dir = reference;
            }
            let s = cmd_evaluate(&cfg)?;
            println!(
                "{} volumes evaluated, {} skipped, written to {}",
                s.report.volumes.len(),
                s.skipped.len(),
                cfg.output_dir().display()
            );
            Ok(if s.skipped.is_empty() { Outcome::Done } else { Outcome::Partial })
        }
        Command::Losses { common } => {
            let path = common
                .config
                .ok_or_else(|| Error::Config("losses needs --config".into()))?;
            let r = cmd_losses(&LossesConfig::load(path)?)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            log::error!("{e}");
            // config and input problems are reported as 1, everything else as a partial failure
            match e {
                Error::Config(_) | Error::Json(_) | Error::InvalidArgument(_) | Error::SpecOutOfBounds { .. } => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
