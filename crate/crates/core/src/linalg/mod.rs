//! Dense linear-algebra primitives: the row-major [`DenseMatrix`], seeded
//! Gaussian sampling, Householder QR, symmetric eigendecomposition and a small
//! SVD. Everything here is a pure function of its inputs.

mod eig;
mod matrix;
mod qr;
mod rng;
mod svd;

pub use eig::{sym_eig, sym_eigvals};
pub use matrix::DenseMatrix;
pub use qr::{householder_qr, orthonormalize, qr_thin, HouseholderQr, PIVOT_UNDERFLOW};
pub use rng::{sample_gaussian, RngState};
pub use svd::{svd_small, SmallSvd};

/// Dot product with four independent accumulators (fixed summation order).
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
