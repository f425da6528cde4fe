mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

use common::*;
use forge_core::cca::{self, CcaModel, CcaParams, Regularization, WhiteningMode};
use forge_core::sparse::CsrMatrix;

fn views(seed: u64, n: usize, d1: usize, d2: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut r = rng(seed);
    let h = gaussian(n, 2, &mut r);
    let x = gaussian(n, d1, &mut r) + &h * gaussian(2, d1, &mut r);
    let z = gaussian(n, d2, &mut r) + &h * gaussian(2, d2, &mut r) * 0.5;
    (x, z)
}

fn solve(x: &DMatrix<f64>, z: &DMatrix<f64>, k: usize, reg: Regularization, mode: WhiteningMode) -> CcaModel {
    let s = cca::accumulate_covariance(&CsrMatrix::from_dense(x), &CsrMatrix::from_dense(z), mode).unwrap();
    cca::solve_cca(&s, &CcaParams::default().with_k(k).with_regularization(reg)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn matches_generalized_eigen_oracle(seed in any::<u64>(), n in 30usize..150, d1 in 1usize..10, d2 in 1usize..10) {
        let (x, z) = views(seed, n, d1, d2);
        let k = d1.min(d2);
        let got = solver_correlations(&x, &z, k, 1e-6, false);
        let want = cca_oracle(&x, &z, 1e-6, false);
        for j in 0..k {
            prop_assert!((got[j] - want[j]).abs() < 1e-8, "{:?} vs {:?}", got, want);
        }
    }

    #[test]
    fn correlations_are_sorted_and_bounded(seed in any::<u64>(), d1 in 2usize..9, d2 in 2usize..9) {
        let (x, z) = views(seed, 120, d1, d2);
        let m = solve(&x, &z, d1.min(d2), Regularization::default(), WhiteningMode::Full);
        prop_assert!(m.singular_values.iter().all(|&s| (0.0..=1.0).contains(&s)));
        prop_assert!(m.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn swapping_views_keeps_correlations(seed in any::<u64>(), d1 in 2usize..8, d2 in 2usize..8) {
        let (x, z) = views(seed, 100, d1, d2);
        let k = d1.min(d2);
        let a = solver_correlations(&x, &z, k, 1e-6, true);
        let b = solver_correlations(&z, &x, k, 1e-6, true);
        for j in 0..k {
            prop_assert!((a[j] - b[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn relative_ridge_is_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let (x, z) = views(seed, 100, 5, 4);
        let a = solve(&x, &z, 4, Regularization::Relative(1e-3), WhiteningMode::Full);
        let b = solve(&(&x * scale), &z, 4, Regularization::Relative(1e-3), WhiteningMode::Full);
        for j in 0..4 {
            prop_assert!((a.singular_values[j] - b.singular_values[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn leading_columns_equal_smaller_rank(seed in any::<u64>(), k in 1usize..6) {
        let (x, z) = views(seed, 150, 8, 7);
        let big = solve(&x, &z, 7, Regularization::default(), WhiteningMode::Full);
        let small = solve(&x, &z, k, Regularization::default(), WhiteningMode::Full);
        for j in 0..k {
            prop_assert!((big.singular_values[j] - small.singular_values[j]).abs() < 1e-9);
            // Singular vectors are unique up to sign; the sign convention pins it.
            let diff = (big.phi1.column(j) - small.phi1.column(j)).amax();
            prop_assert!(diff < 1e-6 * big.phi1.column(j).amax().max(1.0), "column {} differs by {}", j, diff);
        }
    }

    #[test]
    fn split_summaries_merge_to_the_whole(seed in any::<u64>(), cut in 1usize..99) {
        let (x, z) = views(seed, 100, 4, 3);
        let whole = cca::accumulate_covariance(&CsrMatrix::from_dense(&x), &CsrMatrix::from_dense(&z), WhiteningMode::Full).unwrap();
        let part = |r: std::ops::Range<usize>| {
            let xs = x.rows(r.start, r.len()).clone_owned();
            let zs = z.rows(r.start, r.len()).clone_owned();
            cca::accumulate_covariance(&CsrMatrix::from_dense(&xs), &CsrMatrix::from_dense(&zs), WhiteningMode::Full).unwrap()
        };
        let merged = part(0..cut).merge(part(cut..100)).unwrap();
        prop_assert_eq!(merged.n(), 100);
        for centered in [false, true] {
            prop_assert!((merged.cxx(centered).to_dense() - whole.cxx(centered).to_dense()).amax() < 1e-12);
            prop_assert!((merged.czz(centered).to_dense() - whole.czz(centered).to_dense()).amax() < 1e-12);
            prop_assert!((merged.cxz_dense(centered) - whole.cxz_dense(centered)).amax() < 1e-12);
        }
    }
}

/// One-hot spelling-like rows have a diagonal second moment, so diagonal
/// whitening is exact there.
#[test]
fn diagonal_whitening_is_exact_for_indicator_rows() {
    let mut r = rng(9);
    let n = 400;
    let x = DMatrix::from_fn(n, 6, |_, _| 0.0);
    let mut x = x;
    let mut z = gaussian(n, 5, &mut r);
    for i in 0..n {
        let c = r.random_range(0..6);
        x[(i, c)] = 1.0;
        z[(i, c % 5)] += 2.0;
    }
    let full = solve(&x, &z, 4, Regularization::default(), WhiteningMode::Full);
    let diag_x = cca::accumulate_covariance(
        &CsrMatrix::from_dense(&x),
        &CsrMatrix::from_dense(&z),
        WhiteningMode::Auto { max_full_dim: 5 },
    )
    .unwrap();
    assert!(matches!(diag_x.cxx(false), cca::Covariance::Diagonal(_)));
    assert!(matches!(diag_x.czz(false), cca::Covariance::Full(_)));
    let mixed = cca::solve_cca(&diag_x, &CcaParams::default().with_k(4)).unwrap();
    for j in 0..4 {
        assert!((full.singular_values[j] - mixed.singular_values[j]).abs() < 1e-9);
    }
}

#[test]
fn model_file_round_trip_is_bit_exact() {
    let (x, z) = views(4, 80, 5, 5);
    let m = solve(&x, &z, 3, Regularization::default(), WhiteningMode::Full);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cca.bin");
    m.save(&p).unwrap();
    assert_eq!(CcaModel::load(&p).unwrap(), m);
}

#[test]
fn same_seed_same_model() {
    let (x, z) = views(5, 300, 9, 9);
    let a = solve(&x, &z, 3, Regularization::default(), WhiteningMode::Full);
    let b = solve(&x, &z, 3, Regularization::default(), WhiteningMode::Full);
    assert_eq!(a, b);
}

#[test]
fn rejects_rank_beyond_dimensions() {
    let (x, z) = views(6, 50, 3, 2);
    let s = cca::accumulate_covariance(&CsrMatrix::from_dense(&x), &CsrMatrix::from_dense(&z), WhiteningMode::Full).unwrap();
    assert!(cca::solve_cca(&s, &CcaParams::default().with_k(3)).is_err());
    assert!(cca::solve_cca(&s, &CcaParams::default().with_k(0)).is_err());
}
