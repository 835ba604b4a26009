//! Dense symmetric and nonnegative diagonal matrix types.
//!
//! Instances in this crate are small (dimensions in the tens), so matrices
//! are plain row-major `Vec<f64>` buffers. Symmetry is an invariant of
//! [`SymMatrix`], enforced by symmetrising at construction rather than
//! trusting the caller; diagonal covering matrices additionally require
//! nonnegative entries.

use crate::error::{Error, Result};

/// Dense symmetric matrix, row-major storage.
///
/// Construction symmetrises the input as (A + A^T)/2 and rejects non-finite
/// entries, so every value of this type is exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds an `n` x `n` symmetric matrix from row-major entries,
    /// symmetrising the input.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::DimensionMismatch {
                what: "SymMatrix order",
                expected: 1,
                got: 0,
            });
        }
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                what: "SymMatrix entry count",
                expected: n * n,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "SymMatrix entries",
            });
        }
        let mut m = Self { n, data };
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (m.data[i * n + j] + m.data[j * n + i]);
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(n, vec![0.0; n * n]).expect("zero matrix is valid")
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Symmetric matrix with the given diagonal, zero elsewhere.
    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &v) in diag.iter().enumerate() {
            data[i * n + i] = v;
        }
        Self::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// In-place `self += factor * other`. Symmetry is preserved because both
    /// operands are symmetric.
    pub fn add_scaled(&mut self, other: &SymMatrix, factor: f64) -> Result<()> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch {
                what: "SymMatrix add_scaled",
                expected: self.n,
                got: other.n,
            });
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += factor * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.data.iter_mut() {
            *v *= factor;
        }
    }

    /// Difference `self - other` as a new matrix.
    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        let mut out = self.clone();
        out.add_scaled(other, -1.0)?;
        Ok(out)
    }

    /// Congruence transform W^T A W for a column-major `n x r` map `W`
    /// (column c occupies `w[c * n .. (c + 1) * n]`, matching the
    /// eigenvector layout of `EigDecomp`). The result is `r x r` and
    /// symmetric up to roundoff (resymmetrised).
    pub fn congruence(&self, w: &[f64], r: usize) -> Result<SymMatrix> {
        if r == 0 || w.len() != self.n * r {
            return Err(Error::DimensionMismatch {
                what: "congruence map entry count",
                expected: self.n * r,
                got: w.len(),
            });
        }
        let n = self.n;
        // T = A W, also column-major.
        let mut t = vec![0.0; n * r];
        for j in 0..r {
            let wc = &w[j * n..(j + 1) * n];
            let tc = &mut t[j * n..(j + 1) * n];
            for (i, out) in tc.iter_mut().enumerate() {
                let row = &self.data[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for k in 0..n {
                    acc += row[k] * wc[k];
                }
                *out = acc;
            }
        }
        // out[i][j] = column i of W  .  column j of T
        let mut out = vec![0.0; r * r];
        for i in 0..r {
            let wi = &w[i * n..(i + 1) * n];
            for j in 0..r {
                let tj = &t[j * n..(j + 1) * n];
                let mut acc = 0.0;
                for k in 0..n {
                    acc += wi[k] * tj[k];
                }
                out[i * r + j] = acc;
            }
        }
        SymMatrix::new(r, out)
    }
}

/// Trace of the product of two symmetric matrices of equal order:
/// `tr(X Y) = sum_ij X_ij Y_ij`.
pub fn trace_product(x: &SymMatrix, y: &SymMatrix) -> Result<f64> {
    if x.n() != y.n() {
        return Err(Error::DimensionMismatch {
            what: "trace_product operand order",
            expected: x.n(),
            got: y.n(),
        });
    }
    Ok(x.data()
        .iter()
        .zip(y.data().iter())
        .map(|(a, b)| a * b)
        .sum())
}

/// Nonnegative diagonal matrix, stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagMatrix {
    d: Vec<f64>,
}

impl DiagMatrix {
    pub fn new(d: Vec<f64>) -> Result<Self> {
        if d.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "DiagMatrix order",
                expected: 1,
                got: 0,
            });
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "DiagMatrix entries",
            });
        }
        if d.iter().any(|&v| v < 0.0) {
            return Err(Error::NegativeEntry {
                what: "DiagMatrix entries",
            });
        }
        Ok(Self { d })
    }

    pub fn zeros(n: usize) -> Self {
        Self { d: vec![0.0; n] }
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    /// Spectral norm of a nonnegative diagonal matrix: its largest entry.
    pub fn norm(&self) -> f64 {
        self.d.iter().fold(0.0, |acc, &v| acc.max(v))
    }

    pub fn min_entry(&self) -> f64 {
        self.d.iter().fold(f64::INFINITY, |acc, &v| acc.min(v))
    }

    pub fn scale(&self, factor: f64) -> Result<DiagMatrix> {
        DiagMatrix::new(self.d.iter().map(|v| v * factor).collect())
    }

    pub fn to_sym(&self) -> SymMatrix {
        SymMatrix::from_diag(&self.d).expect("diagonal entries are finite")
    }
}
