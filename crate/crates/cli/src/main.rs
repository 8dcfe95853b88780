//! `osr`: train, calibrate, and evaluate open set recognizers from a JSON
//! experiment config. Exit codes: 0 success, 1 runtime failure, 2 bad
//! configuration or usage.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<osr_core::error::Error> for CliError {
    fn from(e: osr_core::error::Error) -> Self {
        use osr_core::error::Error::*;
        match e {
            Config(_) | Unsupported(_) | Parse { .. } | DimensionMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config.
    #[arg(short, long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the recognition threshold theta.
    #[arg(long)]
    theta: Option<f64>,
    /// Override the tail fraction alpha.
    #[arg(long)]
    alpha: Option<f64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            theta: self.theta,
            alpha: self.alpha,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "osr", version, about = "One-vs-rest open set recognition pipeline")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate the configured dataset and write CSV, OSRF, and a manifest.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the per-class sigmoid heads (and baseline, if configured).
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Cross-class validate (theta, alpha) and calibrate the tail models.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Trained model bank; defaults to <out_dir>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Recognize a single feature vector.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Calibrated model; defaults to <out_dir>/calibrated_model.json.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated feature vector, e.g. "0.5,-1.2".
        #[arg(long)]
        features: String,
    },
    /// Evaluate open-set metrics on the held-out test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Calibrated model; defaults to <out_dir>/calibrated_model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare known/unknown KL separation of the two representations.
    Kl {
        #[command(flatten)]
        common: Common,
        /// Trained model bank; defaults to <out_dir>/model.json.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Map open space risk and calibrated probability for one class head.
    Riskmap {
        #[command(flatten)]
        common: Common,
        /// Calibrated model; defaults to <out_dir>/calibrated_model.json.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Class whose head is mapped; overrides the config.
        #[arg(long)]
        class: Option<String>,
    },
}

/// OSR_THREADS caps worker parallelism; 0 or unset means automatic.
fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("OSR_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .map_err(|_| CliError::Usage(format!("OSR_THREADS must be an integer, got '{raw}'")))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.cmd {
        Cmd::Synth { common } => {
            let rc = config::load_config(&common.config, common.overrides())?;
            commands::synth(&rc)
        }
        Cmd::Train { common } => {
            let rc = config::load_config(&common.config, common.overrides())?;
            commands::train(&rc)
        }
        Cmd::Calibrate { common, model } => {
            let rc = config::load_config(&common.config, common.overrides())?;
            commands::calibrate(&rc, model.as_deref())
        }
        Cmd::Predict {
            common,
            model,
            features,
        } => {
            let rc = config::load_config(&common.config, common.overrides())?;
            commands::predict(&rc, model.as_deref(), &features)
        }
        Cmd::Eval { common, model } => {
            let rc = config::load_config(&common.config, common.overrides())?;
            commands::eval(&rc, model.as_deref())
        }
        Cmd::Kl { common, model } => {
            let rc = config::load_config(&common.config, common.overrides())?;
            commands::kl(&rc, model.as_deref())
        }
        Cmd::Riskmap {
            common,
            model,
            class,
        } => {
            let rc = config::load_config(&common.config, common.overrides())?;
            commands::riskmap(&rc, model.as_deref(), class.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CliError::Usage(_) => ExitCode::from(2),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
