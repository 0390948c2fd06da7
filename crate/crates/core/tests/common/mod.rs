#![allow(dead_code)]

use rkfac::linalg::{sample_gaussian, DenseMatrix, RngState};
use rkfac::network::{Batch, Network};

/// Random batch with `n` columns and uniformly drawn labels.
pub fn random_batch(rng: &mut RngState, d_in: usize, n: usize, n_classes: usize) -> Batch {
    let x = sample_gaussian(rng, d_in, n);
    let y = (0..n).map(|_| rng.below(n_classes)).collect();
    Batch::new(x, y).unwrap()
}

/// Mean cross-entropy evaluated with plain scalar loops.
pub fn scalar_loss(weights: &[DenseMatrix], x: &DenseMatrix, y: &[usize]) -> f64 {
    let mut total = 0.0;
    for (j, &label) in y.iter().enumerate() {
        let mut h: Vec<f64> = (0..x.rows()).map(|i| x[(i, j)]).collect();
        for (l, w) in weights.iter().enumerate() {
            let d_in = w.cols() - 1;
            let mut z = vec![0.0; w.rows()];
            for (o, zo) in z.iter_mut().enumerate() {
                let mut s = w[(o, d_in)];
                for (i, hi) in h.iter().enumerate() {
                    s += w[(o, i)] * hi;
                }
                *zo = s;
            }
            if l + 1 < weights.len() {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = z;
        }
        let m = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + h.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - h[label];
    }
    total / y.len() as f64
}

/// Smallest |pre-activation| over all hidden units and samples.
pub fn min_hidden_preact(weights: &[DenseMatrix], x: &DenseMatrix) -> f64 {
    let mut worst = f64::INFINITY;
    for j in 0..x.cols() {
        let mut h: Vec<f64> = (0..x.rows()).map(|i| x[(i, j)]).collect();
        for w in &weights[..weights.len() - 1] {
            let d_in = w.cols() - 1;
            let z: Vec<f64> = (0..w.rows())
                .map(|o| w[(o, d_in)] + (0..d_in).map(|i| w[(o, i)] * h[i]).sum::<f64>())
                .collect();
            worst = z.iter().fold(worst, |acc, v| acc.min(v.abs()));
            h = z.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    worst
}

pub fn weights_of(net: &Network) -> Vec<DenseMatrix> {
    net.layers().iter().map(|l| l.weights.clone()).collect()
}

pub fn max_rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    let scale = b.max_abs().max(1e-300);
    a.sub(b).max_abs() / scale
}

/// Solves `(U diag(d) Uᵀ + λI) Z = V` in double-double arithmetic: the matrix
/// is formed without f64 rounding, solved by Gaussian elimination with partial
/// pivoting plus iterative refinement, and the result is rounded once.
pub fn dd_damped_solve(u: &DenseMatrix, d: &[f64], lambda: f64, v: &DenseMatrix) -> DenseMatrix {
    use twofloat::TwoFloat;
    let n = u.rows();
    let zero = TwoFloat::from(0.0);
    let mut a = vec![vec![zero; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut s = zero;
            for (k, &dk) in d.iter().enumerate() {
                s += TwoFloat::from(u[(i, k)]) * TwoFloat::from(u[(j, k)]) * TwoFloat::from(dk);
            }
            if i == j {
                s += TwoFloat::from(lambda);
            }
            *cell = s;
        }
    }
    let solve = |b: &[TwoFloat]| -> Vec<TwoFloat> {
        let mut m: Vec<Vec<TwoFloat>> = a
            .iter()
            .zip(b)
            .map(|(r, &bi)| r.iter().copied().chain([bi]).collect())
            .collect();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            let (top, rest) = m.split_at_mut(col + 1);
            let pivot = &top[col];
            for row in rest.iter_mut() {
                let f = row[col] / pivot[col];
                for (x, &p) in row[col..].iter_mut().zip(&pivot[col..]) {
                    *x -= f * p;
                }
            }
        }
        let mut x = vec![zero; n];
        for i in (0..n).rev() {
            let mut s = m[i][n];
            for k in i + 1..n {
                s -= m[i][k] * x[k];
            }
            x[i] = s / m[i][i];
        }
        x
    };
    let mut z = DenseMatrix::zeros(n, v.cols());
    for c in 0..v.cols() {
        let b: Vec<TwoFloat> = (0..n).map(|i| TwoFloat::from(v[(i, c)])).collect();
        let mut x = solve(&b);
        for _ in 0..3 {
            let r: Vec<TwoFloat> = (0..n)
                .map(|i| {
                    let mut s = b[i];
                    for k in 0..n {
                        s -= a[i][k] * x[k];
                    }
                    s
                })
                .collect();
            for (xi, di) in x.iter_mut().zip(solve(&r)) {
                *xi += di;
            }
        }
        for (i, xi) in x.iter().enumerate() {
            z[(i, c)] = f64::from(*xi);
        }
    }
    z
}
