use super::eig::descending_order;
use super::qr::householder_qr;
use super::{dot, DenseMatrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Thin SVD of a small matrix.
#[derive(Clone, Debug)]
pub struct SmallSvd {
    /// `m × k` left singular vectors, `k = min(m, n)`.
    pub u: DenseMatrix,
    /// `k` singular values, decreasing.
    pub s: Vec<f64>,
    /// `n × k` right singular vectors.
    pub v: DenseMatrix,
}

/// SVD of a small dense matrix: `X = U diag(s) Vᵀ`.
///
/// Tall inputs are first reduced by Householder QR, then the square triangular
/// factor is diagonalized with one-sided (Hestenes) Jacobi rotations. Columns
/// belonging to exactly zero singular values are completed to an orthonormal
/// set so `U` and `V` always have orthonormal columns.
pub fn svd_small(x: &DenseMatrix) -> Result<SmallSvd> {
    if !x.is_finite() {
        let pos = x
            .as_slice()
            .iter()
            .position(|v| !v.is_finite())
            .unwrap_or(0);
        return Err(Error::NonFinite {
            row: pos / x.cols().max(1),
            col: pos % x.cols().max(1),
        });
    }
    if x.rows() < x.cols() {
        let t = svd_small(&x.transpose())?;
        return Ok(SmallSvd {
            u: t.v,
            s: t.s,
            v: t.u,
        });
    }
    let n = x.cols();
    if n == 0 {
        return Ok(SmallSvd {
            u: DenseMatrix::zeros(x.rows(), 0),
            s: Vec::new(),
            v: DenseMatrix::zeros(0, 0),
        });
    }
    let qr = householder_qr(x);

    // Rows of `wt` are the columns of R; rows of `vt` the columns of V.
    let mut wt = qr.r.transpose();
    let mut vt = DenseMatrix::identity(n);
    let tol = f64::EPSILON * n as f64;
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let wp = wt.row(p);
                    let wq = wt.row(q);
                    (dot(wp, wp), dot(wq, wq), dot(wp, wq))
                };
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut wt, p, q, c, s);
                rotate_pair(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            routine: "svd_small",
            iterations: MAX_SWEEPS,
        });
    }

    let norms: Vec<f64> = (0..n).map(|j| dot(wt.row(j), wt.row(j)).sqrt()).collect();
    let order = descending_order(&norms);
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let mut ur_t = wt.select_rows(&order);
    let vt = vt.select_rows(&order);
    let mut missing = Vec::new();
    for (k, &sk) in s.iter().enumerate() {
        if sk > 1e-300 {
            let inv = 1.0 / sk;
            ur_t.row_mut(k).iter_mut().for_each(|v| *v *= inv);
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal_rows(&mut ur_t, &missing);

    let u = qr.q.matmul_nt(&ur_t);
    Ok(SmallSvd {
        u,
        s,
        v: vt.transpose(),
    })
}

fn rotate_pair(m: &mut DenseMatrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.cols();
    let (top, bottom) = m.as_mut_slice().split_at_mut(q * n);
    let rp = &mut top[p * n..(p + 1) * n];
    let rq = &mut bottom[..n];
    for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Fills the listed rows with unit vectors orthogonal to every other row.
fn complete_orthonormal_rows(m: &mut DenseMatrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = m.cols();
    let mut filled: Vec<usize> = (0..m.rows()).filter(|r| !missing.contains(r)).collect();
    for &target in missing {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for e in 0..n {
            let mut cand = vec![0.0; n];
            cand[e] = 1.0;
            // Two passes of Gram–Schmidt against the accepted rows.
            for _ in 0..2 {
                for &r in &filled {
                    let proj = dot(&cand, m.row(r));
                    super::axpy(-proj, m.row(r), &mut cand);
                }
            }
            let nrm = dot(&cand, &cand).sqrt();
            if best.as_ref().is_none_or(|(b, _)| nrm > *b) {
                best = Some((nrm, cand));
            }
        }
        let (nrm, cand) = best.expect("at least one candidate");
        for (dst, v) in m.row_mut(target).iter_mut().zip(&cand) {
            *dst = v / nrm;
        }
        filled.push(target);
    }
}
