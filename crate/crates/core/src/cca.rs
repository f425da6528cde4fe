//! Two-view canonical correlation analysis.
//!
//! Covariances are accumulated from the sparse view matrices, each view is
//! whitened by `(C + κI)^{-1/2}`, and the top-k singular triples of the
//! whitened cross-covariance `T = Wx Cxz Wz` are found with randomized SVD
//! applied matrix-free. The projections are `Φ1 = Wx U`, `Φ2 = Wz V`.
//!
//! Regularization couples to feature scale: scaling a view by `c` leaves the
//! canonical correlations unchanged only if that view's κ scales by `c²`.
//! [`Regularization::Relative`] (κ = r · trace(C)/d, the default) does this
//! automatically; [`Regularization::Absolute`] does not.

use std::collections::HashMap;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{randomized_svd, LinearOperator, RsvdParams, Whitener};
use crate::sparse::{CsrMatrix, SparseVector};

pub const DEFAULT_MAX_FULL_DIM: usize = 2000;
const CHUNK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WhiteningMode {
    /// Full inverse square root up to this dimension, diagonal beyond.
    Auto { max_full_dim: usize },
    Full,
    Diagonal,
}

impl Default for WhiteningMode {
    fn default() -> Self {
        WhiteningMode::Auto {
            max_full_dim: DEFAULT_MAX_FULL_DIM,
        }
    }
}

impl WhiteningMode {
    fn full_for(self, d: usize) -> bool {
        match self {
            WhiteningMode::Auto { max_full_dim } => d <= max_full_dim,
            WhiteningMode::Full => true,
            WhiteningMode::Diagonal => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    /// κ = factor · trace(C) / d, computed per view.
    Relative(f64),
    Absolute(f64),
}

impl Default for Regularization {
    fn default() -> Self {
        Regularization::Relative(1e-4)
    }
}

impl Regularization {
    fn value(self) -> f64 {
        match self {
            Regularization::Relative(v) | Regularization::Absolute(v) => v,
        }
    }

    fn kappa(self, trace: f64, d: usize) -> f64 {
        match self {
            Regularization::Relative(r) => r * trace / d.max(1) as f64,
            Regularization::Absolute(k) => k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SecondMoment {
    /// Upper triangle `(i <= j)`.
    Full(HashMap<(usize, usize), f64>),
    Diagonal(Vec<f64>),
}

impl SecondMoment {
    fn new(full: bool, d: usize) -> SecondMoment {
        if full {
            SecondMoment::Full(HashMap::new())
        } else {
            SecondMoment::Diagonal(vec![0.0; d])
        }
    }

    fn add_row(&mut self, row: &[(usize, f64)]) {
        match self {
            SecondMoment::Full(m) => {
                for (a, &(i, vi)) in row.iter().enumerate() {
                    for &(j, vj) in &row[a..] {
                        *m.entry((i, j)).or_default() += vi * vj;
                    }
                }
            }
            SecondMoment::Diagonal(d) => {
                for &(i, v) in row {
                    d[i] += v * v;
                }
            }
        }
    }

    fn merge(&mut self, other: SecondMoment) {
        match (self, other) {
            (SecondMoment::Full(a), SecondMoment::Full(b)) => {
                for (k, v) in b {
                    *a.entry(k).or_default() += v;
                }
            }
            (SecondMoment::Diagonal(a), SecondMoment::Diagonal(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
            _ => unreachable!("summaries built with the same mode"),
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            SecondMoment::Full(m) => m.values().all(|v| v.is_finite()),
            SecondMoment::Diagonal(d) => d.iter().all(|v| v.is_finite()),
        }
    }
}

/// Sufficient statistics of the two views; summaries over disjoint row
/// sets merge by addition.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSummary {
    n: usize,
    d1: usize,
    d2: usize,
    sxx: SecondMoment,
    szz: SecondMoment,
    sxz: HashMap<(usize, usize), f64>,
    sum_x: Vec<f64>,
    sum_z: Vec<f64>,
}

/// A view covariance, dense or diagonal-only.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(DMatrix<f64>),
    Diagonal(DVector<f64>),
}

impl Covariance {
    pub fn trace(&self) -> f64 {
        match self {
            Covariance::Full(m) => m.trace(),
            Covariance::Diagonal(d) => d.sum(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Covariance::Full(m) => m.clone(),
            Covariance::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }
}

impl CovarianceSummary {
    fn empty(d1: usize, d2: usize, full_x: bool, full_z: bool) -> CovarianceSummary {
        CovarianceSummary {
            n: 0,
            d1,
            d2,
            sxx: SecondMoment::new(full_x, d1),
            szz: SecondMoment::new(full_z, d2),
            sxz: HashMap::new(),
            sum_x: vec![0.0; d1],
            sum_z: vec![0.0; d2],
        }
    }

    fn add_rows(&mut self, x: &CsrMatrix, z: &CsrMatrix) {
        for i in 0..x.nrows() {
            let xr: Vec<(usize, f64)> = x.row(i).collect();
            let zr: Vec<(usize, f64)> = z.row(i).collect();
            self.sxx.add_row(&xr);
            self.szz.add_row(&zr);
            for &(a, va) in &xr {
                self.sum_x[a] += va;
                for &(b, vb) in &zr {
                    *self.sxz.entry((a, b)).or_default() += va * vb;
                }
            }
            for &(b, vb) in &zr {
                self.sum_z[b] += vb;
            }
            self.n += 1;
        }
    }

    pub fn merge(mut self, other: CovarianceSummary) -> Result<CovarianceSummary> {
        if self.d1 != other.d1 || self.d2 != other.d2 {
            return Err(Error::DimensionMismatch {
                expected: self.d1 * self.d2,
                found: other.d1 * other.d2,
            });
        }
        if std::mem::discriminant(&self.sxx) != std::mem::discriminant(&other.sxx)
            || std::mem::discriminant(&self.szz) != std::mem::discriminant(&other.szz)
        {
            return Err(Error::InvalidArgument("cannot merge summaries with different whitening modes".into()));
        }
        self.n += other.n;
        self.sxx.merge(other.sxx);
        self.szz.merge(other.szz);
        for (k, v) in other.sxz {
            *self.sxz.entry(k).or_default() += v;
        }
        self.sum_x.iter_mut().zip(other.sum_x).for_each(|(a, b)| *a += b);
        self.sum_z.iter_mut().zip(other.sum_z).for_each(|(a, b)| *a += b);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    fn mean(sum: &[f64], n: usize) -> DVector<f64> {
        DVector::from_iterator(sum.len(), sum.iter().map(|s| s / n as f64))
    }

    fn covariance(m: &SecondMoment, sum: &[f64], n: usize, d: usize, centered: bool) -> Covariance {
        let nf = n as f64;
        let mu = Self::mean(sum, n);
        match m {
            SecondMoment::Full(entries) => {
                let mut c = DMatrix::zeros(d, d);
                for (&(i, j), &v) in entries {
                    c[(i, j)] = v / nf;
                    c[(j, i)] = v / nf;
                }
                if centered {
                    c -= &mu * mu.transpose();
                }
                Covariance::Full(c)
            }
            SecondMoment::Diagonal(diag) => {
                let mut c = DVector::from_iterator(d, diag.iter().map(|v| v / nf));
                if centered {
                    c -= mu.component_mul(&mu);
                }
                Covariance::Diagonal(c)
            }
        }
    }

    pub fn cxx(&self, centered: bool) -> Covariance {
        Self::covariance(&self.sxx, &self.sum_x, self.n, self.d1, centered)
    }

    pub fn czz(&self, centered: bool) -> Covariance {
        Self::covariance(&self.szz, &self.sum_z, self.n, self.d2, centered)
    }

    /// Dense cross-covariance (test-scale use).
    pub fn cxz_dense(&self, centered: bool) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.d1, self.d2);
        for (&(i, j), &v) in &self.sxz {
            c[(i, j)] = v / self.n as f64;
        }
        if centered {
            c -= Self::mean(&self.sum_x, self.n) * Self::mean(&self.sum_z, self.n).transpose();
        }
        c
    }

    fn cross_operator(&self, centered: bool) -> CrossCovariance {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.d1];
        for (&(i, j), &v) in &self.sxz {
            rows[i].push((j, v / self.n as f64));
        }
        let rows: Vec<SparseVector> = rows.into_iter().map(SparseVector::from_entries).collect();
        let csr = CsrMatrix::from_rows(&rows, self.d2).expect("columns within d2");
        let means = centered.then(|| (Self::mean(&self.sum_x, self.n), Self::mean(&self.sum_z, self.n)));
        CrossCovariance { csr, means }
    }

    fn is_finite(&self) -> bool {
        self.sxx.is_finite()
            && self.szz.is_finite()
            && self.sxz.values().all(|v| v.is_finite())
            && self.sum_x.iter().chain(&self.sum_z).all(|v| v.is_finite())
    }
}

/// Accumulates `XᵀX`, `ZᵀZ`, `XᵀZ` and the column sums. Row chunks are
/// summarized independently and merged in chunk order, so the result does
/// not depend on thread scheduling.
pub fn accumulate_covariance(x: &CsrMatrix, z: &CsrMatrix, mode: WhiteningMode) -> Result<CovarianceSummary> {
    if x.nrows() != z.nrows() {
        return Err(Error::Alignment(format!(
            "view row counts differ: {} vs {}",
            x.nrows(),
            z.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("no observations"));
    }
    let (d1, d2) = (x.ncols(), z.ncols());
    let (fx, fz) = (mode.full_for(d1), mode.full_for(d2));
    let bounds: Vec<(usize, usize)> = (0..x.nrows())
        .step_by(CHUNK_ROWS)
        .map(|s| (s, (s + CHUNK_ROWS).min(x.nrows())))
        .collect();
    let summarize = |&(s, e): &(usize, usize)| {
        let mut part = CovarianceSummary::empty(d1, d2, fx, fz);
        part.add_rows(&x.slice_rows(s, e), &z.slice_rows(s, e));
        part
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<CovarianceSummary> = {
        use rayon::prelude::*;
        bounds.par_iter().map(summarize).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<CovarianceSummary> = bounds.iter().map(summarize).collect();
    let mut it = parts.into_iter();
    let first = it.next().expect("at least one chunk");
    it.try_fold(first, CovarianceSummary::merge)
}

struct CrossCovariance {
    csr: CsrMatrix,
    means: Option<(DVector<f64>, DVector<f64>)>,
}

impl CrossCovariance {
    fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.csr.nrows(), v.ncols());
        for i in 0..self.csr.nrows() {
            for (j, a) in self.csr.row(i) {
                for c in 0..v.ncols() {
                    out[(i, c)] += a * v[(j, c)];
                }
            }
        }
        if let Some((mx, mz)) = &self.means {
            out -= mx * (mz.transpose() * v);
        }
        out
    }

    fn apply_transpose(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.csr.ncols(), u.ncols());
        for i in 0..self.csr.nrows() {
            for (j, a) in self.csr.row(i) {
                for c in 0..u.ncols() {
                    out[(j, c)] += a * u[(i, c)];
                }
            }
        }
        if let Some((mx, mz)) = &self.means {
            out -= mz * (mx.transpose() * u);
        }
        out
    }
}

/// `Wx Cxz Wz` applied without forming it.
struct WhitenedCross<'a> {
    wx: &'a Whitener,
    wz: &'a Whitener,
    cxz: &'a CrossCovariance,
}

impl LinearOperator for WhitenedCross<'_> {
    fn nrows(&self) -> usize {
        self.wx.dim()
    }

    fn ncols(&self) -> usize {
        self.wz.dim()
    }

    fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.wx.apply(&self.cxz.apply(&self.wz.apply(x)))
    }

    fn apply_transpose(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        self.wz.apply(&self.cxz.apply_transpose(&self.wx.apply(y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcaParams {
    pub k: usize,
    pub regularization: Regularization,
    pub rsvd: RsvdParams,
    pub centered: bool,
}

impl Default for CcaParams {
    fn default() -> Self {
        CcaParams {
            k: 30,
            regularization: Regularization::default(),
            rsvd: RsvdParams::default(),
            centered: false,
        }
    }
}

impl CcaParams {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_regularization(mut self, r: Regularization) -> Self {
        self.regularization = r;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    pub phi1: DMatrix<f64>,
    pub phi2: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub k: usize,
    pub kappa_x: f64,
    pub kappa_z: f64,
}

pub fn solve_cca(summary: &CovarianceSummary, params: &CcaParams) -> Result<CcaModel> {
    let (d1, d2) = summary.dims();
    let k = params.k;
    if k == 0 || k > d1.min(d2) {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the rank bound min(d1, d2) = {}",
            k,
            d1.min(d2)
        )));
    }
    let r = params.regularization.value();
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {}", r)));
    }
    if !summary.is_finite() {
        return Err(Error::Numerical("non-finite values in covariance summary".into()));
    }
    let cxx = summary.cxx(params.centered);
    let czz = summary.czz(params.centered);
    let kappa_x = params.regularization.kappa(cxx.trace(), d1);
    let kappa_z = params.regularization.kappa(czz.trace(), d2);
    if !(kappa_x > 0.0 && kappa_z > 0.0) {
        return Err(Error::Numerical("regularizer vanished (all-zero view?)".into()));
    }
    let whiten = |c: &Covariance, kappa: f64| match c {
        Covariance::Full(m) => Whitener::full(m, kappa),
        Covariance::Diagonal(d) => Whitener::diagonal(d, kappa),
    };
    let wx = whiten(&cxx, kappa_x)?;
    let wz = whiten(&czz, kappa_z)?;
    if !wx.is_full() || !wz.is_full() {
        log::warn!(
            "diagonal whitening in use (d1 = {}, d2 = {}); projections are orthonormal only against the diagonal covariance",
            d1,
            d2
        );
    }
    let cross = summary.cross_operator(params.centered);
    let op = WhitenedCross {
        wx: &wx,
        wz: &wz,
        cxz: &cross,
    };
    let svd = randomized_svd(&op, k, &params.rsvd)?;
    let phi1 = wx.apply(&svd.u);
    let phi2 = wz.apply(&svd.v);
    if phi1.iter().chain(phi2.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite projection".into()));
    }
    Ok(CcaModel {
        phi1,
        phi2,
        singular_values: svd.singular_values,
        k,
        kappa_x,
        kappa_z,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseEmbedding {
    pub phrase: String,
    pub vector: Vec<f64>,
}

/// `Φ1ᵀ x` for each phrase's canonical spelling vector.
pub fn embed_phrases(model: &CcaModel, spelling_vectors: &[(String, SparseVector)]) -> Result<Vec<PhraseEmbedding>> {
    spelling_vectors
        .iter()
        .map(|(p, x)| {
            Ok(PhraseEmbedding {
                phrase: p.clone(),
                vector: x.project(&model.phi1)?,
            })
        })
        .collect()
}

const MODEL_MAGIC: &[u8; 8] = b"FORGECCA";

impl CcaModel {
    pub fn d1(&self) -> usize {
        self.phi1.nrows()
    }

    pub fn d2(&self) -> usize {
        self.phi2.nrows()
    }

    /// Little-endian binary container: magic, `d1 d2 k` (u64), `kappa_x
    /// kappa_z` (f64), singular values, then Φ1 and Φ2 row-major (f64).
    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        out.write_all(MODEL_MAGIC)?;
        for v in [self.d1(), self.d2(), self.k] {
            out.write_all(&(v as u64).to_le_bytes())?;
        }
        for v in [self.kappa_x, self.kappa_z].iter().chain(&self.singular_values) {
            out.write_all(&v.to_le_bytes())?;
        }
        for m in [&self.phi1, &self.phi2] {
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.write_all(&m[(i, j)].to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CcaModel> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |m: &str| Error::parse(path, 0, m.to_string());
        if bytes.len() < 32 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("not a CCA model file"));
        }
        let mut at = 8;
        let mut word = || -> Result<[u8; 8]> {
            let w: [u8; 8] = bytes
                .get(at..at + 8)
                .ok_or_else(|| bad("truncated model file"))?
                .try_into()
                .unwrap();
            at += 8;
            Ok(w)
        };
        let d1 = u64::from_le_bytes(word()?) as usize;
        let d2 = u64::from_le_bytes(word()?) as usize;
        let k = u64::from_le_bytes(word()?) as usize;
        let kappa_x = f64::from_le_bytes(word()?);
        let kappa_z = f64::from_le_bytes(word()?);
        let singular_values = (0..k)
            .map(|_| word().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let mut read_matrix = |rows: usize| -> Result<DMatrix<f64>> {
            let vals = (0..rows * k)
                .map(|_| word().map(f64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            Ok(DMatrix::from_row_slice(rows, k, &vals))
        };
        let phi1 = read_matrix(d1)?;
        let phi2 = read_matrix(d2)?;
        Ok(CcaModel {
            phi1,
            phi2,
            singular_values,
            k,
            kappa_x,
            kappa_z,
        })
    }
}

/// `phrase TAB v1 TAB ... TAB vk`.
pub fn write_embeddings<W: Write>(out: &mut W, embeddings: &[PhraseEmbedding]) -> std::io::Result<()> {
    for e in embeddings {
        write!(out, "{}", e.phrase)?;
        for v in &e.vector {
            write!(out, "\t{}", v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<Vec<PhraseEmbedding>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<PhraseEmbedding> = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let phrase = cols.next().unwrap_or_default().to_string();
        let vector = cols
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::parse(path, no + 1, "bad embedding value"))?;
        if let Some(first) = out.first() {
            if first.vector.len() != vector.len() {
                return Err(Error::parse(path, no + 1, "inconsistent embedding dimension"));
            }
        }
        out.push(PhraseEmbedding { phrase, vector });
    }
    Ok(out)
}
