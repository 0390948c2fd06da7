use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfactor::BoundInputs;
use crate::optimizer::{Method, OptimizerConfig};

/// Everything a subcommand needs. Every field has a default, so `{}` is a
/// valid config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub arch: ArchConfig,
    pub optimizer: OptimizerConfig,
    pub train: TrainConfig,
    pub spectrum: SpectrumConfig,
    pub bound: BoundConfig,
    pub bench: BenchConfig,
    pub compare: CompareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            arch: ArchConfig::default(),
            optimizer: OptimizerConfig::default(),
            train: TrainConfig::default(),
            spectrum: SpectrumConfig::default(),
            bound: BoundConfig::default(),
            bench: BenchConfig::default(),
            compare: CompareConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        let d = &self.dataset;
        if d.n_classes < 2 || d.d_in == 0 {
            return Err(Error::InvalidConfig(format!(
                "dataset needs n_classes >= 2 and d_in >= 1, got {} and {}",
                d.n_classes, d.d_in
            )));
        }
        if d.csv_path.is_none() && d.n_train < self.optimizer.batch_size {
            return Err(Error::InvalidConfig(format!(
                "n_train ({}) must be >= batch_size ({})",
                d.n_train, self.optimizer.batch_size
            )));
        }
        if let Some(&w) = self.arch.hidden.iter().find(|&&w| w < 2) {
            return Err(Error::InvalidConfig(format!(
                "hidden widths must be >= 2, got {w}"
            )));
        }
        if self.train.cadence_early == 0 || self.train.cadence_late == 0 {
            return Err(Error::InvalidConfig(
                "snapshot cadences must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Synthetic Gaussian mixture, or a local CSV when `csv_path` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_classes: usize,
    pub d_in: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Standard deviation of samples around their class center.
    pub spread: f64,
    /// Standard deviation of the class centers.
    pub center_scale: f64,
    /// Rows of `features..., label` with a header line. `n_test` rows are held out.
    pub csv_path: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_classes: 10,
            d_in: 32,
            n_train: 10240,
            n_test: 2048,
            spread: 1.0,
            center_scale: 1.0,
            csv_path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub hidden: Vec<usize>,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 512],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stops early once this many steps have run.
    pub max_steps: Option<usize>,
    /// Record factor spectra during training.
    pub snapshots: bool,
    /// Snapshot period while `step < cadence_switch`.
    pub cadence_early: usize,
    /// Snapshot period afterwards.
    pub cadence_late: usize,
    pub cadence_switch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            max_steps: None,
            snapshots: false,
            cadence_early: 30,
            cadence_late: 300,
            cadence_switch: 300,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrumConfig {
    /// Decay, in orders of magnitude, that counts as "decayed".
    pub threshold_orders: f64,
    /// Number of leading modes over which decay is measured.
    pub window: usize,
    /// Minimum steps for a spectrum run.
    pub min_steps: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            threshold_orders: 1.5,
            window: 200,
            min_steps: 500,
        }
    }
}

/// Inputs for the `prop31` subcommand: the arithmetic bound at a large
/// dimension plus a brute-force check at a small one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundConfig {
    pub arithmetic: BoundInputs,
    pub empirical: BoundInputs,
    pub trials: usize,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            arithmetic: BoundInputs {
                epsilon: 0.03,
                alpha: 0.1,
                rho: 0.95,
                n_m: 256,
                d_m: 1_000_000,
            },
            empirical: BoundInputs {
                epsilon: 0.1,
                alpha: 0.5,
                rho: 0.5,
                n_m: 4,
                d_m: 64,
            },
            trials: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub reps: usize,
    pub rank: usize,
    pub oversampling: usize,
    pub power_iters: usize,
    pub damping: f64,
    /// Columns of the random factor `G` in the test matrix `GGᵀ/m + δI`.
    pub gram_cols: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            dims: vec![256, 512, 1024, 2048],
            reps: 5,
            rank: 220,
            oversampling: 10,
            power_iters: 4,
            damping: 0.1,
            gram_cols: 512,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub methods: Vec<Method>,
    pub seeds: usize,
    /// Test-accuracy targets.
    pub targets: Vec<f64>,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Kfac, Method::RsKfac, Method::SreKfac],
            seeds: 3,
            targets: vec![0.90, 0.95],
        }
    }
}
