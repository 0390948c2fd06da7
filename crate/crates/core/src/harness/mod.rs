//! Experiment plumbing behind the `rkfac` CLI: configuration, synthetic data,
//! training loop, and the CSV/JSON artifacts of each subcommand.

mod bench;
mod compare;
pub mod config;
pub mod data;
mod spectrum;
pub mod train;

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::kfactor::{eigenvalue_count_bound, empirical_bound_check, CountBound, EmpiricalReport};
use crate::linalg::RngState;

pub use bench::{bench_inverse, cmd_bench_inverse, fit_slope, BenchReport, BenchSample};
pub use compare::{cmd_compare, compare_methods, CompareReport, CompareRow, RunSummary};
pub use config::{
    ArchConfig, BenchConfig, BoundConfig, CompareConfig, DatasetConfig, ExperimentConfig,
    SpectrumConfig, TrainConfig,
};
pub use data::Dataset;
pub use spectrum::{cmd_spectrum, summarize_spectra, FactorKind, SpectrumSummary};
pub use train::{train_run, EpochRecord, RunLog, Snapshot, StepRecord};

/// Writes `rows` as CSV with a header derived from the field names.
pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// Trains with `cfg.optimizer.method` and writes `runlog.csv` and
/// `epochs.csv` (plus spectra when snapshots are enabled) to `cfg.out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunLog> {
    cfg.validate()?;
    let data = Dataset::load(&cfg.dataset, cfg.seed)?;
    let (log, _) = train_run(cfg, &data, cfg.optimizer.method, cfg.seed)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_csv(&cfg.out_dir.join("runlog.csv"), &log.steps)?;
    write_csv(&cfg.out_dir.join("epochs.csv"), &log.epochs)?;
    if !log.snapshots.is_empty() {
        spectrum::write_spectra(&cfg.out_dir, &log.snapshots)?;
    }
    Ok(log)
}

/// Contents of `prop31.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub r_eps: usize,
    pub mode_bound: usize,
    pub arithmetic: crate::kfactor::BoundInputs,
    pub trials: usize,
    pub assumption_satisfied: usize,
    pub violations: usize,
    pub empirical: EmpiricalReport,
}

/// Evaluates the eigenvalue-count bound and its brute-force check; writes
/// `prop31.json`.
pub fn cmd_prop31(cfg: &ExperimentConfig) -> Result<BoundReport> {
    let CountBound { r_eps, mode_bound } = eigenvalue_count_bound(&cfg.bound.arithmetic)?;
    let mut rng = RngState::new(cfg.seed);
    let empirical = empirical_bound_check(&cfg.bound.empirical, cfg.bound.trials, &mut rng)?;
    let report = BoundReport {
        r_eps,
        mode_bound,
        arithmetic: cfg.bound.arithmetic,
        trials: empirical.trials,
        assumption_satisfied: empirical.assumption_satisfied,
        violations: empirical.violations,
        empirical,
    };
    fs::create_dir_all(&cfg.out_dir)?;
    write_json(&cfg.out_dir.join("prop31.json"), &report)?;
    Ok(report)
}
