use std::collections::BTreeMap;
use std::fs;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kfactor::{apply_eig_damped_inverse, apply_lowrank_damped_inverse, Side};
use crate::linalg::{sample_gaussian, DenseMatrix, RngState};
use crate::rnla::{rsvd_psd, srevd, LowRankEig, SketchParams};

use super::config::{BenchConfig, ExperimentConfig};
use super::{write_csv, write_json};

const METHODS: [&str; 3] = ["exact", "rsvd", "srevd"];

/// One timed decomposition plus damped-inverse application.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub method: String,
    pub dim: usize,
    pub rep: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchMedian {
    pub method: String,
    pub dim: usize,
    pub median_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub samples: Vec<BenchSample>,
    pub medians: Vec<BenchMedian>,
    /// Least-squares slope of log(median time) against log(dim), per method.
    pub slopes: BTreeMap<String, f64>,
}

impl BenchReport {
    pub fn median(&self, method: &str, dim: usize) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.method == method && m.dim == dim)
            .map(|m| m.median_seconds)
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Random PSD test factor `GGᵀ/m + 10⁻³ I`.
fn test_factor(dim: usize, m: usize, rng: &mut RngState) -> DenseMatrix {
    let g = sample_gaussian(rng, dim, m);
    let mut x = g.matmul_nt(&g);
    x.scale(1.0 / m as f64);
    x.add_to_diagonal(1e-3);
    x.symmetrize();
    x
}

fn time_method(
    method: &str,
    x: &DenseMatrix,
    v: &DenseMatrix,
    cfg: &BenchConfig,
    rng: &mut RngState,
) -> Result<f64> {
    let sketch = SketchParams::new(cfg.rank, cfg.oversampling, cfg.power_iters);
    let start = Instant::now();
    let out = match method {
        "exact" => apply_eig_damped_inverse(&LowRankEig::exact(x)?, cfg.damping, v, Side::Left)?,
        "rsvd" => {
            apply_lowrank_damped_inverse(&rsvd_psd(x, sketch, rng)?, cfg.damping, v, Side::Left)?
        }
        "srevd" => {
            apply_lowrank_damped_inverse(&srevd(x, sketch, rng)?, cfg.damping, v, Side::Left)?
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown bench method {other}"
            )))
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    std::hint::black_box(out);
    Ok(seconds)
}

/// Times decomposition plus damped-inverse application of a `d × d` right-hand
/// side for each dimension and method; repetitions are interleaved across methods.
pub fn bench_inverse(cfg: &BenchConfig, seed: u64) -> Result<BenchReport> {
    if cfg.dims.len() < 2 || cfg.reps == 0 {
        return Err(Error::InvalidConfig(
            "bench needs >= 2 dims and >= 1 rep".into(),
        ));
    }
    let mut samples = Vec::new();
    let mut medians = Vec::new();
    for &dim in &cfg.dims {
        let mut rng = RngState::substream(seed, &[dim as u64]);
        let x = test_factor(dim, cfg.gram_cols, &mut rng);
        let v = sample_gaussian(&mut rng, dim, dim);
        let mut times: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for rep in 0..cfg.reps {
            for method in METHODS {
                let mut sketch_rng = RngState::substream(seed, &[dim as u64, rep as u64]);
                let seconds = time_method(method, &x, &v, cfg, &mut sketch_rng)?;
                times.entry(method).or_default().push(seconds);
                samples.push(BenchSample {
                    method: method.to_string(),
                    dim,
                    rep,
                    seconds,
                });
            }
        }
        for method in METHODS {
            let t = times.get_mut(method).expect("every method timed");
            medians.push(BenchMedian {
                method: method.to_string(),
                dim,
                median_seconds: median(t),
            });
        }
    }
    let slopes = METHODS
        .iter()
        .map(|&method| {
            let points: Vec<(f64, f64)> = medians
                .iter()
                .filter(|m| m.method == method)
                .map(|m| (m.dim as f64, m.median_seconds))
                .collect();
            (method.to_string(), fit_slope(&points))
        })
        .collect();
    Ok(BenchReport {
        samples,
        medians,
        slopes,
    })
}

/// Runs [`bench_inverse`] and writes `bench.csv`, `bench_summary.csv` and
/// `bench_slopes.json`.
pub fn cmd_bench_inverse(cfg: &ExperimentConfig) -> Result<BenchReport> {
    let report = bench_inverse(&cfg.bench, cfg.seed)?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_csv(&cfg.out_dir.join("bench.csv"), &report.samples)?;
    write_csv(&cfg.out_dir.join("bench_summary.csv"), &report.medians)?;
    write_json(&cfg.out_dir.join("bench_slopes.json"), &report.slopes)?;
    Ok(report)
}
