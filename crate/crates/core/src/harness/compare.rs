use std::fs;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::Method;

use super::config::ExperimentConfig;
use super::data::Dataset;
use super::train::train_run;
use super::write_csv;

/// Per-epoch results of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    pub epoch: usize,
    pub test_acc: f64,
    pub t_epoch: f64,
}

/// Statistics for one target accuracy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub target: f64,
    pub hits: usize,
    /// Epochs needed, over runs that hit the target.
    pub epochs: Vec<usize>,
    /// Cumulative training time at the hitting epoch.
    pub seconds: Vec<f64>,
}

/// One row of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: Method,
    pub runs: usize,
    /// Over epochs × runs.
    pub t_epoch_mean: f64,
    pub t_epoch_std: f64,
    /// Total training time per run.
    pub t_total: Vec<f64>,
    pub targets: Vec<TargetStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub runs: Vec<RunSummary>,
}

impl CompareReport {
    pub fn row(&self, method: Method) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn fmt_stat(values: &[f64]) -> String {
    if values.is_empty() {
        return "n/a".into();
    }
    let (m, s) = mean_std(values);
    format!("{m:.3} ± {s:.3}")
}

/// Trains every method with `compare.seeds` seeds (`seed, seed + 1, ...`) on
/// one shared dataset.
pub fn compare_methods(cfg: &ExperimentConfig) -> Result<CompareReport> {
    cfg.validate()?;
    let cmp = &cfg.compare;
    if cmp.methods.is_empty() || cmp.seeds == 0 {
        return Err(Error::InvalidConfig(
            "compare needs >= 1 method and >= 1 seed".into(),
        ));
    }
    let data = Dataset::load(&cfg.dataset, cfg.seed)?;
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &method in &cmp.methods {
        let mut epoch_times = Vec::new();
        let mut t_total = Vec::new();
        let mut targets: Vec<TargetStats> = cmp
            .targets
            .iter()
            .map(|&target| TargetStats {
                target,
                hits: 0,
                epochs: Vec::new(),
                seconds: Vec::new(),
            })
            .collect();
        for i in 0..cmp.seeds {
            let seed = cfg.seed.wrapping_add(i as u64);
            let (log, _) = train_run(cfg, &data, method, seed)?;
            let mut elapsed = 0.0;
            let mut hit = vec![false; targets.len()];
            for e in &log.epochs {
                elapsed += e.t_epoch;
                epoch_times.push(e.t_epoch);
                runs.push(RunSummary {
                    method,
                    seed,
                    epoch: e.epoch,
                    test_acc: e.test_acc,
                    t_epoch: e.t_epoch,
                });
                for (t, done) in targets.iter_mut().zip(hit.iter_mut()) {
                    if !*done && e.test_acc >= t.target {
                        *done = true;
                        t.hits += 1;
                        t.epochs.push(e.epoch + 1);
                        t.seconds.push(elapsed);
                    }
                }
            }
            t_total.push(elapsed);
        }
        let (t_epoch_mean, t_epoch_std) = mean_std(&epoch_times);
        rows.push(CompareRow {
            method,
            runs: cmp.seeds,
            t_epoch_mean,
            t_epoch_std,
            t_total,
            targets,
        });
    }
    Ok(CompareReport { rows, runs })
}

fn pct(target: f64) -> String {
    let p = target * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{}", p.round())
    } else {
        format!("{p}")
    }
}

/// Runs [`compare_methods`] and writes `compare.csv` (one row per method,
/// `mean ± std` cells) and `compare_raw.csv` (one row per run and epoch).
pub fn cmd_compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    let report = compare_methods(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut w = csv::Writer::from_path(cfg.out_dir.join("compare.csv"))?;
    let mut header = vec![
        "method".to_string(),
        "runs".into(),
        "t_epoch".into(),
        "t_total".into(),
    ];
    for t in &cfg.compare.targets {
        let p = pct(*t);
        header.push(format!("t_acc_ge_{p}"));
        header.push(format!("epochs_acc_ge_{p}"));
        header.push(format!("hits_acc_ge_{p}"));
    }
    w.write_record(&header)?;
    for row in &report.rows {
        let mut rec = vec![
            row.method.name().to_string(),
            row.runs.to_string(),
            if row.t_epoch_mean.is_nan() {
                "n/a".into()
            } else {
                format!("{:.3} ± {:.3}", row.t_epoch_mean, row.t_epoch_std)
            },
            fmt_stat(&row.t_total),
        ];
        for t in &row.targets {
            let epochs: Vec<f64> = t.epochs.iter().map(|&e| e as f64).collect();
            rec.push(fmt_stat(&t.seconds));
            rec.push(fmt_stat(&epochs));
            rec.push(format!("{}/{}", t.hits, row.runs));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    write_csv(&cfg.out_dir.join("compare_raw.csv"), &report.runs)?;
    Ok(report)
}
