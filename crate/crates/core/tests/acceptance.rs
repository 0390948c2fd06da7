//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::{dd_damped_solve, min_hidden_preact, random_batch, scalar_loss, weights_of};
use nalgebra::{DMatrix, SymmetricEigen};
use rkfac::harness::{self, ExperimentConfig, FactorKind};
use rkfac::kfactor::{
    apply_lowrank_damped_inverse, eigenvalue_count_bound, empirical_bound_check, BoundInputs, Side,
};
use rkfac::linalg::{orthonormalize, sample_gaussian, DenseMatrix, RngState};
use rkfac::network::Network;
use rkfac::optimizer::{kfac_step, rs_kfac_step, Method, OptimizerConfig, Schedule, StepContext};
use rkfac::rnla::{rsvd_psd, srevd, DecompMethod, LowRankEig, SketchParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let pass = out.pass && in_time;
    let limit = budget.map_or(String::new(), |b| format!(" (limit {b:?})"));
    println!(
        "{} [{id:>2}] {name}: {}; {elapsed:.2?}{limit}",
        if pass { "PASS" } else { "FAIL" },
        out.detail
    );
    pass
}

fn bound_arithmetic() -> Outcome {
    let p = BoundInputs {
        epsilon: 0.03,
        alpha: 0.1,
        rho: 0.95,
        n_m: 256,
        d_m: 1_000_000,
    };
    let a = eigenvalue_count_bound(&p).unwrap().mode_bound;
    let b = eigenvalue_count_bound(&BoundInputs { rho: 0.5, ..p })
        .unwrap()
        .mode_bound;
    Outcome {
        pass: a == 29184 && b == 2304,
        detail: format!("rho=0.95 -> {a} (want 29184), rho=0.5 -> {b} (want 2304)"),
    }
}

fn bound_empirical() -> Outcome {
    let p = BoundInputs {
        epsilon: 0.1,
        alpha: 0.5,
        rho: 0.5,
        n_m: 4,
        d_m: 64,
    };
    let rep = empirical_bound_check(&p, 50, &mut RngState::new(0)).unwrap();
    Outcome {
        pass: rep.trials == 50 && rep.violations == 0,
        detail: format!(
            "{} trials, {} satisfy the assumption, {} violations, max count {} vs bound {}",
            rep.trials,
            rep.assumption_satisfied,
            rep.violations,
            rep.max_count_above,
            rep.bound.mode_bound
        ),
    }
}

fn damped_inverse_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = RngState::new(seed);
        let basis = orthonormalize(&sample_gaussian(&mut rng, 20, 5));
        let mut values: Vec<f64> = (0..5).map(|_| rng.uniform_range(0.0, 10.0)).collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let lr = LowRankEig {
            basis,
            values,
            method: DecompMethod::Rsvd,
        };
        let v = sample_gaussian(&mut rng, 20, 7);
        for lambda in [1e-3, 0.1, 1.0, 10.0] {
            let ours = apply_lowrank_damped_inverse(&lr, lambda, &v, Side::Left).unwrap();
            let want = dd_damped_solve(&lr.basis, &lr.values, lambda, &v);
            worst = worst.max(ours.sub(&want).max_abs());
        }
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("max entry error {worst:.2e} over 100 instances x 4 dampings (tol 1e-10)"),
    }
}

/// `Q diag(0.9^i) Qᵀ` of size 512 and its truncation-optimal rank-50 error.
fn geometric_psd(seed: u64) -> (DenseMatrix, f64) {
    let d = 512;
    let eig: Vec<f64> = (0..d).map(|i| 0.9f64.powi(i as i32)).collect();
    let mut rng = RngState::substream(seed, &[512]);
    let q = orthonormalize(&sample_gaussian(&mut rng, d, d));
    let mut qd = q.clone();
    qd.scale_columns(&eig);
    let mut x = qd.matmul_nt(&q);
    x.symmetrize();
    let na = DMatrix::from_row_slice(d, d, x.as_slice());
    let mut ev: Vec<f64> = SymmetricEigen::new(na)
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let optimal = ev[50..].iter().map(|v| v * v).sum::<f64>().sqrt();
    (x, optimal)
}

fn rsvd_quality_and_ordering() -> (Outcome, Outcome) {
    let params = SketchParams::new(50, 10, 4);
    let mut good = 0;
    let mut worst_ratio: f64 = 0.0;
    let (mut rs_sum, mut sre_sum) = (0.0, 0.0);
    for seed in 0..20 {
        let (x, optimal) = geometric_psd(seed);
        let rs = rsvd_psd(&x, params, &mut RngState::new(1000 + seed))
            .unwrap()
            .reconstruction_error(&x);
        let sre = srevd(&x, params, &mut RngState::new(1000 + seed))
            .unwrap()
            .reconstruction_error(&x);
        let ratio = rs / optimal;
        worst_ratio = worst_ratio.max(ratio);
        if ratio <= 1.05 {
            good += 1;
        }
        rs_sum += rs;
        sre_sum += sre;
    }
    (
        Outcome {
            pass: good >= 19,
            detail: format!("{good}/20 seeds within 1.05x optimal (worst ratio {worst_ratio:.4})"),
        },
        Outcome {
            pass: rs_sum <= sre_sum,
            detail: format!(
                "mean error rsvd {:.8e} <= srevd {:.8e}",
                rs_sum / 20.0,
                sre_sum / 20.0
            ),
        },
    )
}

fn full_rank_degeneracy() -> Outcome {
    let mut rng = RngState::new(6);
    let mut net = Network::new(8, &[16, 12], 4, 0.95, &mut rng).unwrap();
    let cfg = OptimizerConfig {
        rank: Schedule::Constant(17.0),
        oversampling: Schedule::Constant(0.0),
        t_ku: 1,
        ..OptimizerConfig::default()
    };
    let mut worst: f64 = 0.0;
    for step in 0..10 {
        let batch = random_batch(&mut rng, 8, 32, 4);
        let pass = net.forward(&batch).unwrap();
        let back = net.backward().unwrap();
        net.accumulate_factors(&pass.a_matrices, &back.g_matrices)
            .unwrap();
        let ctx = StepContext {
            step,
            epoch: 0,
            seed: 6,
        };
        net.clear_decompositions();
        let exact = kfac_step(&mut net, &back.grads, &cfg, ctx).unwrap();
        net.clear_decompositions();
        let approx = rs_kfac_step(&mut net, &back.grads, &cfg, ctx).unwrap();
        for (a, b) in approx.updates.iter().zip(&exact.updates) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                worst = worst.max((x - y).abs() / y.abs());
            }
        }
        rkfac::optimizer::apply_update(&mut net, &exact.updates, 0.1, 0.0).unwrap();
    }
    Outcome {
        pass: worst <= 1e-6,
        detail: format!("max per-entry relative difference {worst:.2e} over 10 steps (tol 1e-6)"),
    }
}

fn finite_differences() -> Outcome {
    let h = 1e-5;
    let mut rng = RngState::new(17);
    let (mut draws, mut fails, mut resampled) = (0, 0, 0);
    while draws < 100 {
        let mut net = Network::new(6, &[8, 5], 3, 0.95, &mut rng).unwrap();
        let batch = random_batch(&mut rng, 6, 5, 3);
        let weights = weights_of(&net);
        if min_hidden_preact(&weights, &batch.x) < 1e-4 {
            resampled += 1;
            continue;
        }
        net.forward(&batch).unwrap();
        let grads = net.backward().unwrap().grads;
        let l = rng.below(weights.len());
        let (r, c) = (rng.below(weights[l].rows()), rng.below(weights[l].cols()));
        let mut plus = weights.clone();
        plus[l][(r, c)] += h;
        let mut minus = weights.clone();
        minus[l][(r, c)] -= h;
        let fd = (scalar_loss(&plus, &batch.x, &batch.y) - scalar_loss(&minus, &batch.x, &batch.y))
            / (2.0 * h);
        let an = grads[l][(r, c)];
        let err = (an - fd).abs();
        let rel = err / fd.abs().max(an.abs()).max(1e-300);
        if !(rel <= 1e-5 || err <= 1e-7) {
            fails += 1;
        }
        draws += 1;
    }
    Outcome {
        pass: fails == 0,
        detail: format!("{fails} mismatches in 100 draws ({resampled} near-kink resamples)"),
    }
}

fn scaling_gap() -> Outcome {
    let cfg = ExperimentConfig::default();
    let rep = harness::bench_inverse(&cfg.bench, cfg.seed).unwrap();
    let s = &rep.slopes;
    let d = *cfg.bench.dims.iter().max().unwrap();
    let t = |m| rep.median(m, d).unwrap();
    let pass = s["exact"] >= 2.5
        && s["rsvd"] <= 2.4
        && s["srevd"] <= 2.4
        && t("rsvd") < t("exact")
        && t("srevd") < t("exact");
    Outcome {
        pass,
        detail: format!(
            "slopes exact {:.2} rsvd {:.2} srevd {:.2}; at d={d}: exact {:.2}s rsvd {:.2}s srevd {:.2}s",
            s["exact"],
            s["rsvd"],
            s["srevd"],
            t("exact"),
            t("rsvd"),
            t("srevd")
        ),
    }
}

fn speedup_direction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        out_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.arch.hidden = vec![1024, 1024];
    cfg.train.epochs = 5;
    cfg.compare.methods = vec![Method::Kfac, Method::RsKfac];
    cfg.compare.seeds = 3;
    cfg.compare.targets = vec![0.95];
    let rep = harness::cmd_compare(&cfg).unwrap();
    let k = rep.row(Method::Kfac).unwrap();
    let r = rep.row(Method::RsKfac).unwrap();
    let pass = r.t_epoch_mean < k.t_epoch_mean && k.targets[0].hits == 3 && r.targets[0].hits == 3;
    Outcome {
        pass,
        detail: format!(
            "t_epoch kfac {:.2}s rs-kfac {:.2}s; runs reaching 95%: kfac {}/3 (epochs {:?}), rs-kfac {}/3 (epochs {:?})",
            k.t_epoch_mean, r.t_epoch_mean, k.targets[0].hits, k.targets[0].epochs, r.targets[0].hits, r.targets[0].epochs
        ),
    }
}

fn spectrum_decay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        out_dir: dir.path().to_path_buf(),
        ..ExperimentConfig::default()
    };
    let summary = harness::cmd_spectrum(&cfg).unwrap();
    let forward: Vec<_> = summary
        .iter()
        .filter(|s| s.factor == FactorKind::Forward)
        .collect();
    let steps = forward.iter().map(|s| s.final_step).min().unwrap_or(0);
    let decays: Vec<String> = forward
        .iter()
        .map(|s| format!("L{} {:.2} over {}", s.layer, s.final_decay_orders, s.window))
        .collect();
    let pass = !forward.is_empty()
        && steps >= 500
        && forward.iter().all(|s| s.final_decay_orders >= 1.0)
        && dir.path().join("spectrum.csv").exists();
    Outcome {
        pass,
        detail: format!(
            "after {steps} steps, forward decay orders: {}",
            decays.join(", ")
        ),
    }
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    results.push(run(
        1,
        "count bound arithmetic",
        Some(Duration::from_millis(1)),
        bound_arithmetic,
    ));
    results.push(run(
        2,
        "count bound empirical check",
        Some(Duration::from_secs(30)),
        bound_empirical,
    ));
    results.push(run(
        3,
        "damped low-rank inverse vs dense solve",
        Some(Duration::from_secs(10)),
        damped_inverse_identity,
    ));
    // Both criteria share one ensemble; the time limit covers the two of them.
    let mut ordering = None;
    results.push(run(
        4,
        "rsvd near-optimal reconstruction",
        Some(Duration::from_secs(60)),
        || {
            let (quality, order) = rsvd_quality_and_ordering();
            ordering = Some(order);
            quality
        },
    ));
    results.push(run(5, "rsvd error <= srevd error", None, || {
        ordering.expect("criterion 4 ran")
    }));
    results.push(run(
        6,
        "full-width rs-kfac equals kfac",
        None,
        full_rank_degeneracy,
    ));
    results.push(run(
        7,
        "gradients vs central differences",
        None,
        finite_differences,
    ));
    results.push(run(
        8,
        "inverse application scaling",
        Some(Duration::from_secs(600)),
        scaling_gap,
    ));
    results.push(run(
        9,
        "rs-kfac faster per epoch, both reach 95%",
        None,
        speedup_direction,
    ));
    results.push(run(
        10,
        "forward factor spectrum decay",
        None,
        spectrum_decay,
    ));
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    assert_eq!(passed, results.len(), "some acceptance criteria failed");
}
