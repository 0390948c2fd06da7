use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rkfac::linalg::{qr_thin, sample_gaussian, svd_small, sym_eig, DenseMatrix, RngState};

fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

fn random_symmetric(seed: u64, n: usize) -> DenseMatrix {
    let g = sample_gaussian(&mut RngState::new(seed), n, n);
    let mut s = g.add(&g.transpose());
    s.scale(0.5);
    s
}

#[test]
fn sample_gaussian_examples() {
    let a = sample_gaussian(&mut RngState::new(7), 3, 2);
    let b = sample_gaussian(&mut RngState::new(7), 3, 2);
    assert_eq!(a, b);
    let c = sample_gaussian(&mut RngState::new(8), 2, 3);
    assert_ne!(sample_gaussian(&mut RngState::new(7), 2, 3), c);
    let col = sample_gaussian(&mut RngState::new(7), 1000, 1);
    let mean = col.as_slice().iter().sum::<f64>() / 1000.0;
    let var = col
        .as_slice()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / 999.0;
    assert!(mean.abs() <= 0.1, "mean {mean}");
    assert!((0.9..=1.1).contains(&var), "variance {var}");
}

#[test]
fn eigenvalues_match_nalgebra() {
    for (seed, n) in [(1u64, 5usize), (2, 40), (3, 120)] {
        let s = random_symmetric(seed, n);
        let (_, d) = sym_eig(&s).unwrap();
        let mut want: Vec<f64> = SymmetricEigen::new(to_na(&s))
            .eigenvalues
            .iter()
            .copied()
            .collect();
        want.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in d.iter().zip(&want) {
            assert!(
                (a - b).abs() <= 1e-10 * want[0].abs().max(1.0),
                "n={n}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn singular_values_match_nalgebra() {
    let x = sample_gaussian(&mut RngState::new(11), 60, 17);
    let ours = svd_small(&x).unwrap().s;
    let mut want: Vec<f64> = to_na(&x).singular_values().iter().copied().collect();
    want.sort_by(|a, b| b.total_cmp(a));
    for (a, b) in ours.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qr_reconstructs_with_orthonormal_q(seed in any::<u64>(), m in 1usize..40, extra in 0usize..20) {
        let rows = m + extra;
        let x = sample_gaussian(&mut RngState::new(seed), rows, m);
        let (q, r) = qr_thin(&x).unwrap();
        prop_assert!(q.orthonormality_defect() <= 1e-10);
        prop_assert!(q.matmul(&r).sub(&x).frobenius_norm() <= 1e-10 * x.frobenius_norm());
        for i in 0..m {
            prop_assert!(r[(i, i)] >= 0.0);
            for j in 0..i {
                prop_assert_eq!(r[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn sym_eig_reconstructs(seed in any::<u64>(), n in 1usize..60) {
        let s = random_symmetric(seed, n);
        let (p, d) = sym_eig(&s).unwrap();
        prop_assert!(p.orthonormality_defect() <= 1e-10);
        prop_assert!(d.windows(2).all(|w| w[0] >= w[1]));
        let mut pd = p.clone();
        pd.scale_columns(&d);
        let rec = pd.matmul_nt(&p);
        prop_assert!(rec.sub(&s).frobenius_norm() <= 1e-9 * s.frobenius_norm().max(1e-300));
    }

    #[test]
    fn svd_reconstructs(seed in any::<u64>(), m in 1usize..40, n in 1usize..40) {
        let x = sample_gaussian(&mut RngState::new(seed), m, n);
        let svd = svd_small(&x).unwrap();
        prop_assert!(svd.u.orthonormality_defect() <= 1e-10);
        prop_assert!(svd.v.orthonormality_defect() <= 1e-10);
        prop_assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let mut us = svd.u.clone();
        us.scale_columns(&svd.s);
        prop_assert!(us.matmul_nt(&svd.v).sub(&x).frobenius_norm() <= 1e-10 * x.frobenius_norm());
    }

    #[test]
    fn transpose_and_products_agree(seed in any::<u64>(), a in 1usize..12, b in 1usize..12, c in 1usize..12) {
        let mut rng = RngState::new(seed);
        let x = sample_gaussian(&mut rng, a, b);
        let y = sample_gaussian(&mut rng, b, c);
        let xy = x.matmul(&y);
        prop_assert!(x.transpose().matmul_tn(&y).sub(&xy).max_abs() <= 1e-12);
        prop_assert!(x.matmul_nt(&y.transpose()).sub(&xy).max_abs() <= 1e-12);
        prop_assert!(to_na(&xy).relative_eq(&(to_na(&x) * to_na(&y)), 1e-12, 1e-12));
    }
}
