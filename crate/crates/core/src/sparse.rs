//! Compressed-row matrices for assembly and matrix-vector products, with
//! factorizations delegated to faer.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Mat, Side};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Triplet accumulator; duplicate entries are summed on [`Builder::build`].
#[derive(Debug, Clone, Default)]
pub struct Builder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Builder {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.n && c < self.n);
        self.entries.push((r, c, v));
    }

    /// Adds `w * (e_p - e_q)(e_p - e_q)^T`, the form of one edge difference.
    pub fn edge(&mut self, p: usize, q: usize, w: f64) {
        self.push(p, p, w);
        self.push(q, q, w);
        self.push(p, q, -w);
        self.push(q, p, -w);
    }

    pub fn build(mut self) -> Csr {
        self.entries
            .sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Csr {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

impl Csr {
    pub fn diagonal(d: &[f64]) -> Self {
        let mut b = Builder::new(d.len());
        for (k, &v) in d.iter().enumerate() {
            b.push(k, k, v);
        }
        b.build()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// `x^T self y`
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.matvec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn scaled_rows(&self, s: &[f64]) -> Csr {
        let mut out = self.clone();
        for r in 0..self.n {
            for v in &mut out.vals[self.row_ptr[r]..self.row_ptr[r + 1]] {
                *v *= s[r];
            }
        }
        out
    }

    pub fn add_diagonal(&self, d: &[f64]) -> Csr {
        let mut b = Builder::new(self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                b.push(r, c, v);
            }
            b.push(r, r, d[r]);
        }
        b.build()
    }

    /// `alpha * self + beta * other`
    pub fn combine(&self, alpha: f64, other: &Csr, beta: f64) -> Csr {
        assert_eq!(self.n, other.n);
        let mut b = Builder::new(self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                b.push(r, c, alpha * v);
            }
            for (c, v) in other.row(r) {
                b.push(r, c, beta * v);
            }
        }
        b.build()
    }

    /// `self * diag(d) * other`
    pub fn mul_diag_mul(&self, d: &[f64], other: &Csr) -> Csr {
        let mut b = Builder::new(self.n);
        for r in 0..self.n {
            for (q, v) in self.row(r) {
                let s = v * d[q];
                for (c, w) in other.row(q) {
                    b.push(r, c, s * w);
                }
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - self^T`.
    pub fn asymmetry(&self) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                let d = v - self.get(c, r);
                acc += d * d;
            }
        }
        acc.sqrt()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trips: Vec<_> = (0..self.n)
            .flat_map(|r| self.row(r).map(move |(c, v)| Triplet::new(r, c, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.n, self.n, &trips)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

pub(crate) fn to_col(x: &[f64]) -> Col<f64> {
    Col::from_fn(x.len(), |i| x[i])
}

pub(crate) fn from_col(c: &Col<f64>) -> Vec<f64> {
    (0..c.nrows()).map(|i| c[i]).collect()
}

/// A reusable direct solver for a fixed sparse matrix.
#[derive(Debug, Clone)]
pub enum Factorization {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl Factorization {
    /// Cholesky for a symmetric positive definite matrix.
    pub fn cholesky(a: &Csr) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_cholesky(Side::Lower)
            .map(Factorization::Cholesky)
            .map_err(|e| Error::Factorization(format!("cholesky: {e:?}")))
    }

    /// LU with partial pivoting for a general matrix.
    pub fn lu(a: &Csr) -> Result<Self> {
        let m = a.to_faer()?;
        m.sp_lu()
            .map(Factorization::Lu)
            .map_err(|e| Error::Factorization(format!("lu: {e:?}")))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let rhs = to_col(b);
        let x = match self {
            Factorization::Cholesky(f) => f.solve(&rhs),
            Factorization::Lu(f) => f.solve(&rhs),
        };
        let x = from_col(&x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization("solution is not finite".into()));
        }
        Ok(x)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum w_i a_i b_i`
pub(crate) fn wdot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
}
