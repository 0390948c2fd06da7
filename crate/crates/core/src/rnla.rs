//! Randomized low-rank factorizations of (mostly symmetric PSD) matrices.
//!
//! Both kernels share a Gaussian range finder with stabilized subspace
//! iteration: after the initial `Q = orth(XΩ)`, each power step computes
//! `Z = orth(XᵀQ)` and then `Q = orth(XZ)`.
//!
//! * [`rsvd`] projects onto the range, takes the SVD of the small core
//!   `B = QᵀX`, and returns both bases. For PSD input the right basis is the
//!   better eigenbasis estimate, which is what [`rsvd_psd`] returns.
//! * [`srevd`] projects both sides, `C = QᵀXQ`, and eigendecomposes `C`. It
//!   skips the core SVD at the price of a larger projection error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, sample_gaussian, svd_small, sym_eig, DenseMatrix, RngState};

/// Target rank, oversampling and number of power iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SketchParams {
    pub rank: usize,
    pub oversampling: usize,
    pub power_iters: usize,
}

impl SketchParams {
    pub fn new(rank: usize, oversampling: usize, power_iters: usize) -> Self {
        Self {
            rank,
            oversampling,
            power_iters,
        }
    }

    /// Fits the sketch inside a matrix of dimension `dim`: oversampling is
    /// reduced first, then the rank. When `rank + oversampling == dim` the
    /// factorization is exact up to round-off.
    pub fn clamped(self, dim: usize) -> Self {
        let rank = self.rank.clamp(1, dim.max(1));
        let oversampling = self.oversampling.min(dim.saturating_sub(rank));
        Self {
            rank,
            oversampling,
            power_iters: self.power_iters,
        }
    }

    pub fn sketch_width(&self) -> usize {
        self.rank + self.oversampling
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecompMethod {
    Rsvd,
    Srevd,
    Exact,
}

/// Rank-`r` approximate eigenpairs `U diag(d) Uᵀ` of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct LowRankEig {
    /// `dim × r`, orthonormal columns.
    pub basis: DenseMatrix,
    /// Decreasing, length `r`.
    pub values: Vec<f64>,
    pub method: DecompMethod,
}

impl LowRankEig {
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    /// Full eigendecomposition wrapped as a rank-`dim` [`LowRankEig`].
    pub fn exact(s: &DenseMatrix) -> Result<Self> {
        let (basis, values) = sym_eig(s)?;
        Ok(Self {
            basis,
            values,
            method: DecompMethod::Exact,
        })
    }

    /// `U diag(d) Uᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix {
        let mut ud = self.basis.clone();
        ud.scale_columns(&self.values);
        let mut out = ud.matmul_nt(&self.basis);
        out.symmetrize();
        out
    }

    /// `‖X − U diag(d) Uᵀ‖_F`.
    pub fn reconstruction_error(&self, x: &DenseMatrix) -> f64 {
        self.reconstruct().sub(x).frobenius_norm()
    }
}

/// Randomized SVD output: `X ≈ U diag(s) Vᵀ`.
#[derive(Clone, Debug)]
pub struct RsvdFactors {
    /// `m × r`
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    /// `n × r`
    pub v: DenseMatrix,
}

fn validate_input(x: &DenseMatrix, op: &'static str) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::dims(
            op,
            "non-empty matrix",
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    if !x.is_finite() {
        let pos = x
            .as_slice()
            .iter()
            .position(|v| !v.is_finite())
            .unwrap_or(0);
        return Err(Error::NonFinite {
            row: pos / x.cols(),
            col: pos % x.cols(),
        });
    }
    Ok(())
}

fn validate_square(x: &DenseMatrix, op: &'static str) -> Result<()> {
    validate_input(x, op)?;
    if !x.is_square() {
        return Err(Error::dims(
            op,
            "square matrix",
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    Ok(())
}

/// Orthonormal `m × k` basis approximating the dominant range of `x`.
pub fn range_finder(
    x: &DenseMatrix,
    width: usize,
    power_iters: usize,
    rng: &mut RngState,
) -> DenseMatrix {
    let omega = sample_gaussian(rng, x.cols(), width);
    let mut q = orthonormalize(&x.matmul(&omega));
    for _ in 0..power_iters {
        let z = orthonormalize(&x.matmul_tn(&q));
        q = orthonormalize(&x.matmul(&z));
    }
    q
}

/// Randomized SVD of a general `m × n` matrix.
///
/// Sketch parameters are clamped to `min(m, n)`. A sketch that collapses on a
/// low-rank input still yields orthonormal bases; the missing modes come back
/// with zero singular values.
pub fn rsvd(x: &DenseMatrix, params: SketchParams, rng: &mut RngState) -> Result<RsvdFactors> {
    validate_input(x, "rsvd")?;
    let p = params.clamped(x.rows().min(x.cols()));
    let q = range_finder(x, p.sketch_width(), p.power_iters, rng);
    // B = QᵀX is k × n; its SVD is taken through Bᵀ = U_b' Σ V_b'ᵀ, so
    // B = V_b' Σ U_b'ᵀ.
    let bt = x.matmul_tn(&q);
    let core = svd_small(&bt)?;
    let r = p.rank;
    Ok(RsvdFactors {
        u: q.matmul(&core.v.leading_columns(r)),
        s: core.s[..r].to_vec(),
        v: core.u.leading_columns(r),
    })
}

/// Randomized SVD of a symmetric PSD matrix, keeping the V-side basis:
/// `X ≈ Ṽ diag(s) Ṽᵀ`.
pub fn rsvd_psd(x: &DenseMatrix, params: SketchParams, rng: &mut RngState) -> Result<LowRankEig> {
    validate_square(x, "rsvd_psd")?;
    let f = rsvd(x, params, rng)?;
    Ok(LowRankEig {
        basis: f.v,
        values: f.s,
        method: DecompMethod::Rsvd,
    })
}

/// Symmetric randomized EVD of a PSD matrix.
///
/// Negative core eigenvalues (round-off) are clamped to zero.
pub fn srevd(x: &DenseMatrix, params: SketchParams, rng: &mut RngState) -> Result<LowRankEig> {
    validate_square(x, "srevd")?;
    let p = params.clamped(x.rows());
    let q = range_finder(x, p.sketch_width(), p.power_iters, rng);
    let mut c = q.matmul_tn(&x.matmul(&q));
    c.symmetrize();
    let (pc, dc) = sym_eig(&c)?;
    let r = p.rank;
    Ok(LowRankEig {
        basis: q.matmul(&pc.leading_columns(r)),
        values: dc[..r].iter().map(|v| v.max(0.0)).collect(),
        method: DecompMethod::Srevd,
    })
}
