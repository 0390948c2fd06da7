//! Symmetric eigendecomposition.
//!
//! Householder reduction to tridiagonal form followed by implicit QL with
//! Wilkinson-type shifts. Eigenvector rotations are applied to rows of the
//! transposed basis so every update streams two contiguous rows.

use super::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};

/// Iteration cap per eigenvalue for the QL sweeps.
const MAX_QL_ITERATIONS: usize = 64;

/// Symmetric eigendecomposition `S = P diag(d) Pᵀ`, with `d` sorted decreasingly.
///
/// The input is symmetrized as `(S + Sᵀ)/2` first. Ties keep their
/// pre-sort order.
pub fn sym_eig(s: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>)> {
    let (zt, d) = decompose(s, true)?;
    let zt = zt.expect("vectors requested");
    let order = descending_order(&d);
    let values = order.iter().map(|&i| d[i]).collect();
    Ok((zt.select_rows(&order).transpose(), values))
}

/// Eigenvalues only, sorted decreasingly.
pub fn sym_eigvals(s: &DenseMatrix) -> Result<Vec<f64>> {
    let (_, d) = decompose(s, false)?;
    let order = descending_order(&d);
    Ok(order.iter().map(|&i| d[i]).collect())
}

pub(crate) fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    // `sort_by` is stable, so ties keep their index order.
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

fn check_square(s: &DenseMatrix) -> Result<()> {
    if !s.is_square() {
        return Err(Error::dims(
            "sym_eig",
            "square matrix",
            format!("{}x{}", s.rows(), s.cols()),
        ));
    }
    if !s.is_finite() {
        let pos = s
            .as_slice()
            .iter()
            .position(|v| !v.is_finite())
            .unwrap_or(0);
        return Err(Error::NonFinite {
            row: pos / s.cols(),
            col: pos % s.cols(),
        });
    }
    Ok(())
}

/// Returns (optional transposed eigenvector basis, unsorted eigenvalues).
fn decompose(s: &DenseMatrix, vectors: bool) -> Result<(Option<DenseMatrix>, Vec<f64>)> {
    check_square(s)?;
    let n = s.rows();
    if n == 0 {
        return Ok((vectors.then(|| DenseMatrix::zeros(0, 0)), Vec::new()));
    }
    let mut a = s.clone();
    a.symmetrize();
    let (diag, off, tau) = tridiagonalize(&mut a);
    let mut zt = vectors.then(|| accumulate_reflectors(&a, &tau));
    let mut d = diag;
    let mut e = off;
    ql_implicit(&mut d, &mut e, zt.as_mut())?;
    Ok((zt, d))
}

/// In-place Householder tridiagonalization. Row `k` of `a` ends up holding the
/// reflector vector for step `k` in columns `k+1..n` (leading 1 implicit).
fn tridiagonalize(a: &mut DenseMatrix) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut diag = vec![0.0; n];
    let mut off = vec![0.0; n];
    let mut tau = vec![0.0; n];
    let mut p = vec![0.0; n];

    for k in 0..n.saturating_sub(2) {
        diag[k] = a[(k, k)];
        let len = n - k - 1;
        let (head, rest) = a.as_mut_slice().split_at_mut((k + 1) * n);
        let x = &mut head[k * n + k + 1..(k + 1) * n];
        let alpha = x[0];
        let tail_sq = dot(&x[1..], &x[1..]);
        if tail_sq == 0.0 {
            off[k] = alpha;
            tau[k] = 0.0;
            x[0] = 1.0;
            continue;
        }
        let norm = (alpha * alpha + tail_sq).sqrt();
        let beta = if alpha >= 0.0 { -norm } else { norm };
        tau[k] = (beta - alpha) / beta;
        let inv = 1.0 / (alpha - beta);
        x[1..].iter_mut().for_each(|v| *v *= inv);
        x[0] = 1.0;
        off[k] = beta;
        let v: &[f64] = x;
        let t = tau[k];

        // Trailing block S occupies rows k+1.., columns k+1.. of `rest`.
        // p = tau * S v
        let p = &mut p[..len];
        for (i, pi) in p.iter_mut().enumerate() {
            let row = &rest[i * n + k + 1..(i + 1) * n];
            *pi = t * dot(row, v);
        }
        // w = p - (tau/2)(pᵀv) v
        let gamma = 0.5 * t * dot(p, v);
        axpy(-gamma, v, p);
        // S -= v wᵀ + w vᵀ
        for i in 0..len {
            let row = &mut rest[i * n + k + 1..(i + 1) * n];
            axpy(-v[i], p, row);
            axpy(-p[i], v, row);
        }
    }
    if n >= 2 {
        diag[n - 2] = a[(n - 2, n - 2)];
        off[n - 2] = a[(n - 2, n - 1)];
    }
    diag[n - 1] = a[(n - 1, n - 1)];
    off[n - 1] = 0.0;
    (diag, off, tau)
}

/// Builds Qᵀ (rows are the columns of Q) for `A = Q T Qᵀ`.
fn accumulate_reflectors(a: &DenseMatrix, tau: &[f64]) -> DenseMatrix {
    let n = a.rows();
    let mut qt = DenseMatrix::identity(n);
    for k in (0..n.saturating_sub(2)).rev() {
        if tau[k] == 0.0 {
            continue;
        }
        let v = &a.row(k)[k + 1..];
        for c in (k + 1)..n {
            let row = &mut qt.row_mut(c)[k + 1..];
            let w = tau[k] * dot(row, v);
            axpy(-w, v, row);
        }
    }
    qt
}

/// Implicit QL on the tridiagonal `(d, e)`, where `e[i]` couples `i` and `i+1`.
/// Rotations are mirrored onto rows of `zt` when present.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut zt: Option<&mut DenseMatrix>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    let eps = f64::EPSILON;
    let mut shift_total = 0.0;
    let mut tst1 = 0.0f64;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_QL_ITERATIONS {
                    return Err(Error::NoConvergence {
                        routine: "sym_eig",
                        iterations: MAX_QL_ITERATIONS,
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift_total += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = zt.as_deref_mut() {
                        rotate_rows(z, i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_total;
        e[l] = 0.0;
    }
    Ok(())
}

/// `(row_i, row_{i+1}) ← (c·row_i − s·row_{i+1}, s·row_i + c·row_{i+1})`.
#[inline]
fn rotate_rows(z: &mut DenseMatrix, i: usize, c: f64, s: f64) {
    let n = z.cols();
    let (top, bottom) = z.as_mut_slice().split_at_mut((i + 1) * n);
    let ri = &mut top[i * n..];
    let rj = &mut bottom[..n];
    for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{sample_gaussian, RngState};

    /// Cyclic Jacobi rotations: slow but independent reference.
    fn jacobi_eigvals(s: &DenseMatrix) -> Vec<f64> {
        let n = s.rows();
        let mut a = s.clone();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)].powi(2))
                .sum::<f64>()
                .sqrt();
            if off <= 1e-14 * a.frobenius_norm() {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let sn = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - sn * akq;
                        a[(k, q)] = sn * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - sn * aqk;
                        a[(q, k)] = sn * apk + c * aqk;
                    }
                }
            }
        }
        let mut d = a.diagonal();
        d.sort_by(|x, y| y.total_cmp(x));
        d
    }

    fn random_symmetric(seed: u64, n: usize) -> DenseMatrix {
        let g = sample_gaussian(&mut RngState::new(seed), n, n);
        let mut s = g.add(&g.transpose());
        s.scale(0.5);
        s
    }

    fn reconstruction_error(s: &DenseMatrix, p: &DenseMatrix, d: &[f64]) -> f64 {
        let mut pd = p.clone();
        pd.scale_columns(d);
        pd.matmul_nt(p).sub(s).frobenius_norm() / s.frobenius_norm().max(1e-300)
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let (p, d) = sym_eig(&DenseMatrix::identity(5)).unwrap();
        assert_eq!(d, vec![1.0; 5]);
        assert!(p.orthonormality_defect() < 1e-15);
    }

    #[test]
    fn two_by_two_closed_form() {
        let s = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (p, d) = sym_eig(&s).unwrap();
        assert!((d[0] - 3.0).abs() < 1e-14 && (d[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p[(0, 0)].abs() - h).abs() < 1e-14);
        assert!((p[(0, 0)] - p[(1, 0)]).abs() < 1e-14);
        assert!((p[(0, 1)] + p[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn rank_one_outer_product() {
        let v = sample_gaussian(&mut RngState::new(11), 10, 1);
        let s = v.gram_rows();
        let (_, d) = sym_eig(&s).unwrap();
        let nv2 = v.frobenius_norm().powi(2);
        assert!((d[0] - nv2).abs() < 1e-10 * nv2.max(1.0));
        assert!(d[1..].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn matches_jacobi_reference() {
        for seed in 0..10 {
            let s = random_symmetric(seed, 3 + seed as usize * 3);
            let d = sym_eigvals(&s).unwrap();
            let j = jacobi_eigvals(&s);
            for (a, b) in d.iter().zip(&j) {
                assert!((a - b).abs() < 1e-10, "seed {seed}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reconstruction_and_orthonormality_up_to_300() {
        for (seed, n) in [(1u64, 1usize), (2, 2), (3, 17), (4, 64), (5, 150), (6, 300)] {
            let s = random_symmetric(seed, n);
            let (p, d) = sym_eig(&s).unwrap();
            assert!(p.orthonormality_defect() < 1e-10, "n={n}");
            assert!(reconstruction_error(&s, &p, &d) <= 1e-9, "n={n}");
            assert!(d.windows(2).all(|w| w[0] >= w[1]));
            let vals = sym_eigvals(&s).unwrap();
            for (a, b) in vals.iter().zip(&d) {
                assert!((a - b).abs() < 1e-10 * d[0].abs().max(1.0));
            }
        }
    }

    #[test]
    fn psd_input_has_tiny_negatives_at_worst() {
        let m = sample_gaussian(&mut RngState::new(9), 80, 30);
        let s = m.gram_rows();
        let d = sym_eigvals(&s).unwrap();
        assert!(*d.last().unwrap() >= -1e-9 * d[0]);
    }

    #[test]
    fn degenerate_and_zero_inputs() {
        let (p, d) = sym_eig(&DenseMatrix::zeros(4, 4)).unwrap();
        assert_eq!(d, vec![0.0; 4]);
        assert!(p.orthonormality_defect() < 1e-15);
        let diag = DenseMatrix::from_diag(&[1.0, 3.0, 3.0, -2.0]);
        let (_, d) = sym_eig(&diag).unwrap();
        assert_eq!(d, vec![3.0, 3.0, 1.0, -2.0]);
    }

    #[test]
    fn rejects_non_square() {
        assert!(sym_eig(&DenseMatrix::zeros(2, 3)).is_err());
    }
}
