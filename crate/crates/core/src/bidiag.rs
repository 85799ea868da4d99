//! Compact views of the small projected bidiagonal matrices.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// `(k+1) x k` lower-bidiagonal matrix with `diag = (α₁..α_k)` and
/// `sub = (β₂..β_{k+1})` on the first subdiagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerBidiag {
    pub diag: Vec<f64>,
    pub sub: Vec<f64>,
}

/// `k x k` upper-bidiagonal matrix; `sup[j]` sits at `(j, j+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBidiag {
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl LowerBidiag {
    pub fn new(diag: Vec<f64>, sub: Vec<f64>) -> Result<Self> {
        check_len("lower bidiagonal subdiagonal", diag.len(), sub.len())?;
        if diag.is_empty() {
            return Err(Error::InvalidArgument("empty bidiagonal matrix".into()));
        }
        Ok(Self { diag, sub })
    }

    pub fn k(&self) -> usize {
        self.diag.len()
    }

    /// `B y`, length `k+1`.
    pub fn mul(&self, y: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut out = vec![0.0; k + 1];
        for j in 0..k {
            out[j] += self.diag[j] * y[j];
            out[j + 1] += self.sub[j] * y[j];
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut m = DMatrix::zeros(k + 1, k);
        for j in 0..k {
            m[(j, j)] = self.diag[j];
            m[(j + 1, j)] = self.sub[j];
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.sub)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Singular values in decreasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.to_dense().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }
}

impl UpperBidiag {
    pub fn new(diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidArgument("empty bidiagonal matrix".into()));
        }
        check_len("upper bidiagonal superdiagonal", diag.len() - 1, sup.len())?;
        Ok(Self { diag, sup })
    }

    pub fn k(&self) -> usize {
        self.diag.len()
    }

    pub fn mul(&self, y: &[f64]) -> Vec<f64> {
        let k = self.k();
        (0..k)
            .map(|i| {
                let mut v = self.diag[i] * y[i];
                if i + 1 < k {
                    v += self.sup[i] * y[i + 1];
                }
                v
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut m = DMatrix::zeros(k, k);
        for j in 0..k {
            m[(j, j)] = self.diag[j];
            if j + 1 < k {
                m[(j, j + 1)] = self.sup[j];
            }
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.diag
            .iter()
            .chain(&self.sup)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
