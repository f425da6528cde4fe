//! Dense helpers, matrix-free operators and randomized truncated SVD.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear map applied to blocks of column vectors.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `A X` for `X` with `ncols()` rows.
    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64>;
    /// `Aᵀ Y` for `Y` with `nrows()` rows.
    fn apply_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self * x
    }

    fn apply_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.tr_mul(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RsvdParams {
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for RsvdParams {
    fn default() -> Self {
        RsvdParams {
            oversampling: 10,
            power_iterations: 4,
            seed: 13,
        }
    }
}

/// Rank-k factors: `A ≈ U diag(σ) Vᵀ`, σ non-increasing.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.singular_values));
        &self.u * s * self.v.transpose()
    }
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // Column-major fill order keeps draws stable for a given seed.
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Orthonormal basis for the column span (thin Householder QR).
pub fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Randomized range finder with power iterations, followed by an exact SVD
/// of the small projected matrix.
pub fn randomized_svd<A: LinearOperator + ?Sized>(
    a: &A,
    k: usize,
    params: &RsvdParams,
) -> Result<TruncatedSvd> {
    let (m, n) = (a.nrows(), a.ncols());
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "rank {} outside 1..={} for a {}x{} operator",
            k,
            m.min(n),
            m,
            n
        )));
    }
    let l = (k + params.oversampling).min(m.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let omega = gaussian_matrix(n, l, &mut rng);
    let mut q = orthonormalize(a.apply(&omega));
    for _ in 0..params.power_iterations {
        let z = orthonormalize(a.apply_transpose(&q));
        q = orthonormalize(a.apply(&z));
    }
    // B = Qᵀ A, formed as (Aᵀ Q)ᵀ; decompose Bᵀ (n x l, tall).
    let bt = a.apply_transpose(&q);
    let svd = bt.svd(true, true);
    let (Some(w), Some(ut)) = (svd.u, svd.v_t) else {
        return Err(Error::Numerical("SVD of projected matrix failed".into()));
    };
    // Bᵀ = W S Ũᵀ  =>  B = Ũ S Wᵀ, A ≈ (Q Ũ) S Wᵀ.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    order.truncate(k);
    let u_small = ut.transpose();
    let mut u = DMatrix::zeros(m, k);
    let mut v = DMatrix::zeros(n, k);
    let mut sv = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let uc = &q * u_small.column(src);
        let vc = w.column(src).clone_owned();
        // Sign convention: largest-magnitude entry of each left vector positive.
        let pivot = uc.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        u.set_column(dst, &(uc * sign));
        v.set_column(dst, &(vc * sign));
        sv.push(svd.singular_values[src]);
    }
    Ok(TruncatedSvd {
        u,
        singular_values: sv,
        v,
    })
}

/// Exact SVD of a dense matrix, sorted, truncated to k.
pub fn exact_svd(a: &DMatrix<f64>, k: usize) -> TruncatedSvd {
    let svd = a.clone().svd(true, true);
    let (u_full, vt_full) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    order.truncate(k);
    let mut u = DMatrix::zeros(a.nrows(), order.len());
    let mut v = DMatrix::zeros(a.ncols(), order.len());
    let mut sv = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        u.set_column(dst, &u_full.column(src));
        v.set_column(dst, &vt_full.row(src).transpose());
        sv.push(svd.singular_values[src]);
    }
    TruncatedSvd {
        u,
        singular_values: sv,
        v,
    }
}

/// Spectral norm by power iteration on `AᵀA` (dense, test-scale).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let ata = a.tr_mul(a);
    SymmetricEigen::new(ata)
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// `(C + κI)^{-1/2}` either exactly or from the diagonal alone.
#[derive(Debug, Clone)]
pub enum Whitener {
    Full(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl Whitener {
    pub fn full(c: &DMatrix<f64>, kappa: f64) -> Result<Whitener> {
        let d = c.nrows();
        let reg = c + DMatrix::identity(d, d) * kappa;
        let eig = SymmetricEigen::new(reg);
        let mut scaled = eig.eigenvectors.clone();
        for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda <= 0.0 || !lambda.is_finite() {
                return Err(Error::Numerical(format!(
                    "regularized covariance not positive definite (eigenvalue {})",
                    lambda
                )));
            }
            scaled.column_mut(j).scale_mut(1.0 / lambda.sqrt());
        }
        Ok(Whitener::Full(scaled * eig.eigenvectors.transpose()))
    }

    pub fn diagonal(diag: &DVector<f64>, kappa: f64) -> Result<Whitener> {
        let mut w = diag.clone();
        for x in w.iter_mut() {
            let v = *x + kappa;
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::Numerical(format!("regularized variance {} not positive", v)));
            }
            *x = 1.0 / v.sqrt();
        }
        Ok(Whitener::Diagonal(w))
    }

    pub fn dim(&self) -> usize {
        match self {
            Whitener::Full(m) => m.nrows(),
            Whitener::Diagonal(d) => d.len(),
        }
    }

    /// `W X` (W is symmetric, so this is also `Wᵀ X`).
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Whitener::Full(m) => m * x,
            Whitener::Diagonal(d) => {
                let mut out = x.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    row.scale_mut(d[i]);
                }
                out
            }
        }
    }

    pub fn is_full(&self) -> bool {
        matches!(self, Whitener::Full(_))
    }
}
