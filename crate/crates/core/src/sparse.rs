//! Sparse vectors and row-compressed matrices for the view features.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(column, value)` pairs with strictly increasing columns and no explicit
/// zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    /// Sorts, sums duplicate columns and drops zeros.
    pub fn from_entries(mut entries: Vec<(usize, f64)>) -> SparseVector {
        entries.sort_by_key(|e| e.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (c, v) in entries {
            match out.last_mut() {
                Some(last) if last.0 == c => last.1 += v,
                _ => out.push((c, v)),
            }
        }
        out.retain(|e| e.1 != 0.0);
        SparseVector { entries: out }
    }

    pub fn indicator(columns: impl IntoIterator<Item = usize>) -> SparseVector {
        SparseVector::from_entries(columns.into_iter().map(|c| (c, 1.0)).collect())
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn max_column(&self) -> Option<usize> {
        self.entries.last().map(|e| e.0)
    }

    /// `Mᵀ x` for a dense `M` with one row per column id.
    pub fn project(&self, m: &DMatrix<f64>) -> Result<Vec<f64>> {
        if let Some(c) = self.max_column() {
            if c >= m.nrows() {
                return Err(Error::DimensionMismatch {
                    expected: m.nrows(),
                    found: c + 1,
                });
            }
        }
        let mut out = vec![0.0; m.ncols()];
        for &(c, v) in &self.entries {
            for (j, o) in out.iter_mut().enumerate() {
                *o += v * m[(c, j)];
            }
        }
        Ok(out)
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(rows: &[SparseVector], ncols: usize) -> Result<CsrMatrix> {
        let mut m = CsrMatrix {
            ncols,
            indptr: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        };
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: &SparseVector) -> Result<()> {
        if let Some(c) = row.max_column() {
            if c >= self.ncols {
                return Err(Error::DimensionMismatch {
                    expected: self.ncols,
                    found: c + 1,
                });
            }
        }
        for &(c, v) in row.entries() {
            self.indices.push(c);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
        Ok(())
    }

    pub fn from_dense(m: &DMatrix<f64>) -> CsrMatrix {
        let rows: Vec<SparseVector> = (0..m.nrows())
            .map(|i| SparseVector::from_entries((0..m.ncols()).map(|j| (j, m[(i, j)])).collect()))
            .collect();
        CsrMatrix::from_rows(&rows, m.ncols()).expect("columns within bounds")
    }

    pub fn nrows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    pub fn row_vector(&self, i: usize) -> SparseVector {
        SparseVector {
            entries: self.row(i).collect(),
        }
    }

    /// Rows `[start, end)` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> CsrMatrix {
        let (a, b) = (self.indptr[start], self.indptr[end]);
        CsrMatrix {
            ncols: self.ncols,
            indptr: self.indptr[start..=end].iter().map(|p| p - a).collect(),
            indices: self.indices[a..b].to_vec(),
            values: self.values[a..b].to_vec(),
        }
    }

    pub fn scaled(&self, c: f64) -> CsrMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= c);
        m
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }

    /// Writes the triplet format: header `n d nnz`, then `row col value`.
    pub fn write_triplets<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.nrows(), self.ncols, self.nnz())?;
        for i in 0..self.nrows() {
            for (j, v) in self.row(i) {
                writeln!(out, "{} {} {}", i, j, v)?;
            }
        }
        Ok(())
    }

    pub fn read_triplets(path: &Path) -> Result<CsrMatrix> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(f).lines().enumerate();
        let header = match lines.next() {
            Some((_, l)) => l.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::parse(path, 1, "missing header")),
        };
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, 1, "header must be `n d nnz`"))?;
        if h.len() != 3 {
            return Err(Error::parse(path, 1, "header must be `n d nnz`"));
        }
        let (n, d, nnz) = (h[0], h[1], h[2]);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut seen = 0;
        for (no, line) in lines {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let t: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::parse(path, no + 1, "expected `row col value`");
            if t.len() != 3 {
                return Err(bad());
            }
            let r: usize = t[0].parse().map_err(|_| bad())?;
            let c: usize = t[1].parse().map_err(|_| bad())?;
            let v: f64 = t[2].parse().map_err(|_| bad())?;
            if r >= n || c >= d {
                return Err(Error::parse(path, no + 1, "index out of bounds"));
            }
            rows[r].push((c, v));
            seen += 1;
        }
        if seen != nnz {
            return Err(Error::parse(path, 1, format!("header says {} entries, found {}", nnz, seen)));
        }
        let rows: Vec<SparseVector> = rows.into_iter().map(SparseVector::from_entries).collect();
        CsrMatrix::from_rows(&rows, d)
    }
}
