use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfactor::SpectrumReport;

use super::config::ExperimentConfig;
use super::data::Dataset;
use super::train::{train_run, Snapshot};
use super::write_csv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorKind {
    Forward,
    Backward,
}

/// Decay of one factor over the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub layer: usize,
    pub factor: FactorKind,
    pub d_m: usize,
    /// Modes over which decay is measured, `min(window, d_M)`.
    pub window: usize,
    /// First snapshot step whose decay reaches the threshold, if any.
    pub first_step_at_threshold: Option<usize>,
    pub final_step: usize,
    pub final_decay_orders: f64,
}

#[derive(Serialize)]
struct SpectrumRow {
    step: usize,
    layer: usize,
    idx: usize,
    eigenvalue: f64,
}

pub(crate) fn write_spectra(dir: &Path, snapshots: &[Snapshot]) -> Result<()> {
    let rows = |pick: fn(&Snapshot) -> &[f64]| -> Vec<SpectrumRow> {
        snapshots
            .iter()
            .flat_map(|s| {
                pick(s)
                    .iter()
                    .enumerate()
                    .map(move |(idx, &eigenvalue)| SpectrumRow {
                        step: s.step,
                        layer: s.layer,
                        idx,
                        eigenvalue,
                    })
            })
            .collect()
    };
    write_csv(&dir.join("spectrum.csv"), &rows(|s| &s.forward))?;
    write_csv(&dir.join("spectrum_backward.csv"), &rows(|s| &s.backward))?;
    Ok(())
}

/// Per layer and factor: when (if ever) the spectrum first decays by
/// `threshold_orders` within `window` modes, and the decay at the last snapshot.
pub fn summarize_spectra(
    snapshots: &[Snapshot],
    window: usize,
    threshold_orders: f64,
) -> Result<Vec<SpectrumSummary>> {
    if snapshots.is_empty() {
        return Err(Error::MissingSnapshots);
    }
    let mut layers: Vec<usize> = snapshots.iter().map(|s| s.layer).collect();
    layers.sort_unstable();
    layers.dedup();
    let mut out = Vec::new();
    for layer in layers {
        for factor in [FactorKind::Forward, FactorKind::Backward] {
            let mut summary: Option<SpectrumSummary> = None;
            for snap in snapshots.iter().filter(|s| s.layer == layer) {
                let values = match factor {
                    FactorKind::Forward => &snap.forward,
                    FactorKind::Backward => &snap.backward,
                };
                let report = SpectrumReport::from_eigenvalues(values.clone());
                let w = window.min(values.len());
                let orders = report.decay_orders(w);
                let s = summary.get_or_insert(SpectrumSummary {
                    layer,
                    factor,
                    d_m: values.len(),
                    window: w,
                    first_step_at_threshold: None,
                    final_step: snap.step,
                    final_decay_orders: orders,
                });
                if s.first_step_at_threshold.is_none() && orders >= threshold_orders {
                    s.first_step_at_threshold = Some(snap.step);
                }
                s.final_step = snap.step;
                s.final_decay_orders = orders;
            }
            out.extend(summary);
        }
    }
    Ok(out)
}

/// Trains with snapshots for at least `spectrum.min_steps` steps, writes the
/// spectra and `spectrum_summary.csv`.
pub fn cmd_spectrum(cfg: &ExperimentConfig) -> Result<Vec<SpectrumSummary>> {
    cfg.validate()?;
    let data = Dataset::load(&cfg.dataset, cfg.seed)?;
    let mut run_cfg = cfg.clone();
    run_cfg.train.snapshots = true;
    let per_epoch = (data.n_train() / cfg.optimizer.batch_size.min(data.n_train())).max(1);
    let needed = cfg.spectrum.min_steps.div_ceil(per_epoch);
    run_cfg.train.epochs = run_cfg.train.epochs.max(needed);
    if let Some(cap) = run_cfg.train.max_steps {
        run_cfg.train.max_steps = Some(cap.max(cfg.spectrum.min_steps));
    }
    let (log, _) = train_run(&run_cfg, &data, cfg.optimizer.method, cfg.seed)?;
    let summary = summarize_spectra(
        &log.snapshots,
        cfg.spectrum.window,
        cfg.spectrum.threshold_orders,
    )?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_spectra(&cfg.out_dir, &log.snapshots)?;
    write_csv(&cfg.out_dir.join("spectrum_summary.csv"), &summary)?;
    Ok(summary)
}
