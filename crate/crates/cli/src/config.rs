//! Experiment configuration: JSON file plus a small set of flag overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use osr_core::netcore::TrainConfig;
use osr_core::openset::BaselineKind;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Label-first CSV with a header row.
    Csv { path: PathBuf },
    /// Binary feature container written by `osr synth`.
    Osrf { path: PathBuf },
    /// Unit-variance Gaussian blobs on a lattice.
    Blobs {
        classes: usize,
        dim: usize,
        separation: f64,
        n_per_class: usize,
    },
    /// The fixed 12-class 2-D layout used by the training experiments.
    Supplementary { n_per_class: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub target_loss: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            learning_rate: 0.1,
            epochs: 2000,
            batch_size: 32,
            momentum: 0.9,
            target_loss: 1e-3,
        }
    }
}

impl TrainParams {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            seed,
            target_loss: self.target_loss,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    /// Classes held out of training entirely; their samples only appear in
    /// the test set. 0 keeps the evaluation closed-set.
    pub n_unknown: usize,
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            n_unknown: 0,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSpec {
    pub delta: f64,
    pub r: f64,
    pub tau: f64,
    pub grid_res: usize,
    pub ball_margin: f64,
    /// Class whose head is mapped; `osr riskmap --class` overrides.
    pub class: Option<String>,
}

impl Default for RiskSpec {
    fn default() -> Self {
        RiskSpec {
            delta: 0.05,
            r: 0.0,
            tau: 0.5,
            grid_res: 64,
            ball_margin: 0.5,
            class: None,
        }
    }
}

fn default_arch() -> Vec<usize> {
    vec![5]
}

fn default_theta() -> f64 {
    0.5
}

fn default_alpha() -> f64 {
    0.2
}

fn default_theta_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 * 0.05).collect()
}

fn default_alpha_grid() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.3, 0.5]
}

fn default_holdout() -> usize {
    1
}

fn default_k_list() -> Vec<usize> {
    vec![4, 6, 8, 10]
}

fn default_seed() -> u64 {
    42
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default = "default_arch")]
    pub arch: Vec<usize>,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub baseline: BaselineKind,
    #[serde(default)]
    pub split: SplitSpec,
    /// Recognition threshold used when no calibrated value is available.
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Tail fraction used when no validated value is available.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_theta_grid")]
    pub theta_grid: Vec<f64>,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    #[serde(default = "default_holdout")]
    pub holdout_classes: usize,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    /// Unknown-class counts evaluated as an openness sweep; empty disables
    /// the sweep.
    #[serde(default)]
    pub openness_sweep: Vec<usize>,
    #[serde(default)]
    pub risk: RiskSpec,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

/// Flag values that replace config fields; recorded verbatim in reports.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Overrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

/// A config resolved against its overrides, with the checksum of the
/// resolved form. The checksum covers content only, never file metadata,
/// so reruns hash identically.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub cfg: ExperimentConfig,
    pub checksum: String,
    pub overrides: Overrides,
}

pub fn load_config(path: &Path, overrides: Overrides) -> Result<ResolvedConfig, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    if let Some(ref out_dir) = overrides.out_dir {
        cfg.out_dir = out_dir.clone();
    }
    if let Some(theta) = overrides.theta {
        cfg.theta = theta;
    }
    if let Some(alpha) = overrides.alpha {
        cfg.alpha = alpha;
    }
    validate(&cfg)?;
    let canonical = serde_json::to_vec(&cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    let checksum = sha256_hex(&canonical);
    Ok(ResolvedConfig {
        cfg,
        checksum,
        overrides,
    })
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.train
        .to_train_config(cfg.seed)
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if !(0.0..=1.0).contains(&cfg.theta) {
        return Err(CliError::Usage("theta must lie in [0,1]".into()));
    }
    if !(0.0 < cfg.alpha && cfg.alpha < 1.0) {
        return Err(CliError::Usage("alpha must lie in (0,1)".into()));
    }
    if cfg.k_list.is_empty() || cfg.k_list.iter().any(|&k| k < 2) {
        return Err(CliError::Usage("k_list entries must be at least 2".into()));
    }
    match &cfg.dataset {
        DatasetSpec::Csv { path } | DatasetSpec::Osrf { path } => {
            if !path.exists() {
                return Err(CliError::Usage(format!(
                    "dataset file {} does not exist",
                    path.display()
                )));
            }
        }
        DatasetSpec::Blobs {
            classes,
            dim,
            n_per_class,
            ..
        } => {
            if *classes < 2 || *dim == 0 || *n_per_class < 2 {
                return Err(CliError::Usage(
                    "blobs need classes >= 2, dim >= 1, n_per_class >= 2".into(),
                ));
            }
        }
        DatasetSpec::Supplementary { n_per_class } => {
            if *n_per_class < 2 {
                return Err(CliError::Usage("n_per_class must be at least 2".into()));
            }
        }
    }
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
