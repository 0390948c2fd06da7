//! Exponential-average Kronecker factors and the operations built on them.
//!
//! An EA factor evolves as `M̄ ← ρ M̄ + (1 − ρ) M Mᵀ`, with `M` of shape
//! `d_M × n_M`. Because each update has rank at most `n_M` and old updates are
//! damped geometrically, at most `⌈log(αε)/log ρ⌉ · n_M` eigenvalues can stay
//! above `ε λ_max` (given `λ_max ≥ α σ_M²`, with `σ_M` bounding the singular
//! values of every update). [`eigenvalue_count_bound`] evaluates that count and
//! [`empirical_bound_check`] verifies it by brute force.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian, svd_small, sym_eigvals, DenseMatrix, RngState};
use crate::rnla::LowRankEig;

/// Exponential-average factor `M̄`.
#[derive(Clone, Debug)]
pub struct EaKFactor {
    mbar: DenseMatrix,
    rho: f64,
    steps: usize,
}

impl EaKFactor {
    /// `M̄₋₁ = I`.
    pub fn identity(dim: usize, rho: f64) -> Self {
        Self::from_matrix(DenseMatrix::identity(dim), rho)
    }

    /// `M̄₋₁ = 0`; matches the infinite-sum form with no history.
    pub fn zero(dim: usize, rho: f64) -> Self {
        Self::from_matrix(DenseMatrix::zeros(dim, dim), rho)
    }

    pub fn from_matrix(mbar: DenseMatrix, rho: f64) -> Self {
        assert!(mbar.is_square(), "EA factor must be square");
        assert!(
            (0.0..1.0).contains(&rho),
            "rho must lie in [0, 1), got {rho}"
        );
        Self {
            mbar,
            rho,
            steps: 0,
        }
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.mbar
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn set_rho(&mut self, rho: f64) {
        assert!(
            (0.0..1.0).contains(&rho),
            "rho must lie in [0, 1), got {rho}"
        );
        self.rho = rho;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.mbar.rows()
    }

    /// `M̄ ← ρ M̄ + (1 − ρ) M Mᵀ`, then re-symmetrized.
    pub fn update(&mut self, m: &DenseMatrix) -> Result<()> {
        if m.rows() != self.dim() {
            return Err(Error::dims(
                "ea_update",
                format!("{} rows", self.dim()),
                format!("{} rows", m.rows()),
            ));
        }
        if !m.is_finite() {
            let pos = m
                .as_slice()
                .iter()
                .position(|v| !v.is_finite())
                .unwrap_or(0);
            return Err(Error::NonFinite {
                row: pos / m.cols().max(1),
                col: pos % m.cols().max(1),
            });
        }
        let outer = m.matmul_nt(m);
        self.mbar.scale(self.rho);
        self.mbar.axpy(1.0 - self.rho, &outer);
        self.mbar.symmetrize();
        self.steps += 1;
        Ok(())
    }
}

/// Eigenvalues of a factor, decreasing and clamped at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
}

impl SpectrumReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.iter_mut().for_each(|v| *v = v.max(0.0));
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self { eigenvalues }
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    /// Number of eigenvalues with `λ_i ≥ ε λ_max`.
    pub fn count_above(&self, epsilon: f64) -> usize {
        let threshold = epsilon * self.lambda_max();
        self.eigenvalues
            .iter()
            .take_while(|&&v| v >= threshold)
            .count()
    }

    /// Orders of magnitude between the largest eigenvalue and eigenvalue
    /// number `window` (1-based), i.e. `log10(λ_1 / λ_window)`; infinite if
    /// that eigenvalue is zero.
    pub fn decay_orders(&self, window: usize) -> f64 {
        let window = window.clamp(1, self.eigenvalues.len().max(1));
        let top = self.lambda_max();
        let tail = self.eigenvalues.get(window - 1).copied().unwrap_or(0.0);
        if top == 0.0 {
            0.0
        } else if tail == 0.0 {
            f64::INFINITY
        } else {
            (top / tail).log10()
        }
    }
}

pub fn spectrum(factor: &EaKFactor) -> Result<SpectrumReport> {
    Ok(SpectrumReport::from_eigenvalues(sym_eigvals(
        factor.matrix(),
    )?))
}

/// Inputs to the eigenvalue-count bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Relative threshold: eigenvalues at or above `ε λ_max` are counted.
    pub epsilon: f64,
    /// Assumed ratio `λ_max / σ_M²` lower bound.
    pub alpha: f64,
    pub rho: f64,
    /// Columns per update.
    pub n_m: usize,
    /// Factor dimension.
    pub d_m: usize,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.epsilon) || !open(self.alpha) || !open(self.rho) {
            return Err(Error::InvalidConfig(format!(
                "epsilon, alpha and rho must lie in (0, 1): {self:?}"
            )));
        }
        if self.n_m == 0 || self.d_m == 0 {
            return Err(Error::InvalidConfig(format!(
                "n_M and d_M must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountBound {
    /// `⌈log(αε) / log ρ⌉`
    pub r_eps: usize,
    /// `min(r_eps · n_M, d_M)`
    pub mode_bound: usize,
}

/// Maximum number of eigenvalues of an EA factor that can sit above `ε λ_max`.
pub fn eigenvalue_count_bound(p: &BoundInputs) -> Result<CountBound> {
    p.validate()?;
    let ratio = (p.alpha * p.epsilon).ln() / p.rho.ln();
    // Snap ratios within round-off of an integer so that e.g. αε = ρ gives 1.
    let nearest = ratio.round();
    let ratio = if (ratio - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest
    } else {
        ratio
    };
    let r_eps = (ratio.ceil() as usize).max(1);
    Ok(CountBound {
        r_eps,
        mode_bound: r_eps.saturating_mul(p.n_m).min(p.d_m),
    })
}

/// Outcome of one synthetic EA sequence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub lambda_max: f64,
    pub count_above: usize,
    pub assumption_holds: bool,
    pub violation: bool,
}

/// Summary of [`empirical_bound_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalReport {
    pub inputs: BoundInputs,
    pub bound: CountBound,
    pub sigma_m: f64,
    pub updates_per_trial: usize,
    pub trials: usize,
    pub assumption_satisfied: usize,
    pub violations: usize,
    pub max_count_above: usize,
}

/// Feeds `updates` into an identity-initialized EA factor and checks the
/// count bound, given that every update has `σ_max ≤ sigma_m`.
///
/// The identity start is a legal history only when `sigma_m ≥ 1`.
pub fn check_sequence(
    p: &BoundInputs,
    updates: &[DenseMatrix],
    sigma_m: f64,
) -> Result<TrialOutcome> {
    let bound = eigenvalue_count_bound(p)?;
    let mut factor = EaKFactor::identity(p.d_m, p.rho);
    for m in updates {
        factor.update(m)?;
    }
    let report = spectrum(&factor)?;
    let lambda_max = report.lambda_max();
    let assumption_holds = lambda_max >= p.alpha * sigma_m * sigma_m;
    let count_above = report.count_above(p.epsilon);
    Ok(TrialOutcome {
        lambda_max,
        count_above,
        assumption_holds,
        violation: assumption_holds && count_above > bound.mode_bound,
    })
}

/// Brute-force check of the count bound on random EA sequences.
///
/// Each trial draws `3 · r_eps` Gaussian updates of shape `d_M × n_M`,
/// rescaled so their largest singular value is exactly `σ_M = 1`, and checks
/// the bound whenever the realized factor satisfies `λ_max ≥ α σ_M²`. Trials
/// where the assumption fails are counted but not judged.
pub fn empirical_bound_check(
    p: &BoundInputs,
    trials: usize,
    rng: &mut RngState,
) -> Result<EmpiricalReport> {
    let bound = eigenvalue_count_bound(p)?;
    let sigma_m = 1.0;
    let updates_per_trial = 3 * bound.r_eps;
    let mut report = EmpiricalReport {
        inputs: *p,
        bound,
        sigma_m,
        updates_per_trial,
        trials,
        assumption_satisfied: 0,
        violations: 0,
        max_count_above: 0,
    };
    for _ in 0..trials {
        let mut updates = Vec::with_capacity(updates_per_trial);
        for _ in 0..updates_per_trial {
            let mut m = sample_gaussian(rng, p.d_m, p.n_m);
            let top = svd_small(&m)?.s[0];
            m.scale(sigma_m / top);
            updates.push(m);
        }
        let outcome = check_sequence(p, &updates, sigma_m)?;
        report.max_count_above = report.max_count_above.max(outcome.count_above);
        if outcome.assumption_holds {
            report.assumption_satisfied += 1;
        }
        if outcome.violation {
            report.violations += 1;
        }
    }
    Ok(report)
}

/// Which side of `V` the damped inverse multiplies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// `(U D Uᵀ + λI)⁻¹ V`
    Left,
    /// `V (U D Uᵀ + λI)⁻¹`
    Right,
}

fn check_damping(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::DampingNonpositive(lambda))
    }
}

fn check_side(dim: usize, v: &DenseMatrix, side: Side, op: &'static str) -> Result<()> {
    let got = match side {
        Side::Left => v.rows(),
        Side::Right => v.cols(),
    };
    if got != dim {
        return Err(Error::dims(op, format!("{side:?} dimension {dim}"), got));
    }
    Ok(())
}

/// `(Ũ D̃ Ũᵀ + λI)⁻¹ V = Ũ[(D̃ + λI)⁻¹ − I/λ]ŨᵀV + V/λ` without forming a
/// `d × d` matrix. Cost is `O(r · d · cols(V))`.
///
/// Exact when the basis has orthonormal columns. The bracket is evaluated as
/// `−d_i / (λ(d_i + λ))`, the same value without cancellation.
pub fn apply_lowrank_damped_inverse(
    lr: &LowRankEig,
    lambda: f64,
    v: &DenseMatrix,
    side: Side,
) -> Result<DenseMatrix> {
    check_damping(lambda)?;
    check_side(lr.dim(), v, side, "apply_lowrank_damped_inverse")?;
    match side {
        Side::Left => Ok(lowrank_left(lr, lambda, v)),
        // Computed as the transpose of the left application so the two sides
        // agree exactly.
        Side::Right => Ok(lowrank_left(lr, lambda, &v.transpose()).transpose()),
    }
}

fn lowrank_left(lr: &LowRankEig, lambda: f64, v: &DenseMatrix) -> DenseMatrix {
    let coeff: Vec<f64> = lr
        .values
        .iter()
        .map(|&d| -d / (lambda * (d + lambda)))
        .collect();
    let mut proj = lr.basis.matmul_tn(v);
    proj.scale_rows(&coeff);
    let mut out = lr.basis.matmul(&proj);
    out.axpy(1.0 / lambda, v);
    out
}

/// `U (D + λI)⁻¹ Uᵀ V` from a full eigendecomposition (the exact K-FAC path).
pub fn apply_eig_damped_inverse(
    eig: &LowRankEig,
    lambda: f64,
    v: &DenseMatrix,
    side: Side,
) -> Result<DenseMatrix> {
    check_damping(lambda)?;
    check_side(eig.dim(), v, side, "apply_eig_damped_inverse")?;
    let left = |v: &DenseMatrix| {
        let inv: Vec<f64> = eig.values.iter().map(|&d| 1.0 / (d + lambda)).collect();
        let mut proj = eig.basis.matmul_tn(v);
        proj.scale_rows(&inv);
        eig.basis.matmul(&proj)
    };
    match side {
        Side::Left => Ok(left(v)),
        Side::Right => Ok(left(&v.transpose()).transpose()),
    }
}
