use super::{axpy, dot, DenseMatrix};
use crate::error::{Error, Result};

/// Pivot norms at or below this are treated as an exactly zero column.
pub const PIVOT_UNDERFLOW: f64 = 1e-300;

/// Thin Householder QR of an `m × n` matrix (`m ≥ n`).
#[derive(Clone, Debug)]
pub struct HouseholderQr {
    /// `m × n`, orthonormal columns.
    pub q: DenseMatrix,
    /// `n × n`, upper triangular.
    pub r: DenseMatrix,
    /// Smallest Householder pivot norm encountered, with its column.
    pub min_pivot: (usize, f64),
}

/// Householder QR that never fails: a numerically zero column gets an identity
/// reflector, so `Q` is orthonormal even when `X` is rank deficient.
///
/// The diagonal of `R` is made nonnegative, which fixes the sign ambiguity.
pub fn householder_qr(x: &DenseMatrix) -> HouseholderQr {
    let (m, n) = x.shape();
    assert!(m >= n, "householder_qr needs rows >= cols, got {m}x{n}");
    // Work on Xᵀ so every column of X is a contiguous row.
    let mut a = x.transpose();
    let mut tau = vec![0.0; n];
    let mut r = DenseMatrix::zeros(n, n);
    let mut min_pivot = (0, f64::INFINITY);

    for j in 0..n {
        let (head, tail) = a.as_mut_slice().split_at_mut((j + 1) * m);
        let col = &mut head[j * m + j..(j + 1) * m];
        let norm = dot(col, col).sqrt();
        if norm < min_pivot.1 {
            min_pivot = (j, norm);
        }
        let alpha = col[0];
        let tail_norm_sq = dot(&col[1..], &col[1..]);
        let beta = if norm <= PIVOT_UNDERFLOW || tail_norm_sq == 0.0 {
            // Already upper-triangular in this column: identity reflector.
            tau[j] = 0.0;
            alpha
        } else {
            let beta = -alpha.signum() * norm;
            let beta = if alpha == 0.0 { -norm } else { beta };
            tau[j] = (beta - alpha) / beta;
            let inv = 1.0 / (alpha - beta);
            col[1..].iter_mut().for_each(|v| *v *= inv);
            beta
        };
        col[0] = 1.0;
        r[(j, j)] = beta;

        if tau[j] != 0.0 {
            let v: &[f64] = col;
            for i in (j + 1)..n {
                let row = &mut tail[(i - j - 1) * m + j..(i - j) * m];
                let w = tau[j] * dot(row, v);
                axpy(-w, v, row);
            }
        }
        for i in (j + 1)..n {
            r[(j, i)] = tail[(i - j - 1) * m + j];
        }
    }

    // Backward accumulation: Q = H_0 (H_1 (... H_{n-1} I_thin)), rows of `qt`
    // being the columns of Q. Columns < j are still unit vectors untouched by H_j.
    let mut qt = DenseMatrix::zeros(n, m);
    for j in 0..n {
        qt[(j, j)] = 1.0;
    }
    for j in (0..n).rev() {
        if tau[j] == 0.0 {
            continue;
        }
        let v = &a.row(j)[j..];
        for c in j..n {
            let row = &mut qt.row_mut(c)[j..];
            let w = tau[j] * dot(row, v);
            axpy(-w, v, row);
        }
    }

    for j in 0..n {
        if r[(j, j)] < 0.0 {
            r.row_mut(j).iter_mut().for_each(|v| *v = -*v);
            qt.row_mut(j).iter_mut().for_each(|v| *v = -*v);
        }
    }

    HouseholderQr {
        q: qt.transpose(),
        r,
        min_pivot,
    }
}

/// Thin QR, `X = QR`, failing with [`Error::RankDeficient`] when a pivot
/// column is numerically zero.
pub fn qr_thin(x: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    if x.rows() < x.cols() {
        return Err(Error::dims(
            "qr_thin",
            format!("rows >= cols ({})", x.cols()),
            format!("{} rows", x.rows()),
        ));
    }
    let qr = householder_qr(x);
    let (column, norm) = qr.min_pivot;
    if x.cols() > 0 && norm <= PIVOT_UNDERFLOW {
        return Err(Error::RankDeficient { column, norm });
    }
    Ok((qr.q, qr.r))
}

/// Orthonormal basis for the column span of a tall matrix (rank-deficient input allowed).
pub fn orthonormalize(x: &DenseMatrix) -> DenseMatrix {
    householder_qr(x).q
}
