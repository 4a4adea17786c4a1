//! Dense complex linear algebra and a small convex solver.
//!
//! Problem sizes in this crate are tiny (matrix orders of a few dozen), so
//! everything is dense, row-major and allocation-friendly. Correctness and
//! reproducibility matter more than raw speed here.

mod eig;
mod solver;
mod svd;

pub use eig::{hermitian_eigendecomposition, hermitian_max_eigpair};
pub use solver::{Constraint, ConvexSubproblem, LinearTerm, SolvedPoint};
pub use svd::svd_complex;

use num_complex::Complex64;

use crate::{Error, Result};

pub type C64 = Complex64;

/// Complex column vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CVector {
    entries: Vec<C64>,
}

impl CVector {
    /// Wraps entries as a vector. Non-finite entries are a caller bug.
    pub fn new(entries: Vec<C64>) -> Self {
        debug_assert!(
            entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            "non-finite vector entry"
        );
        Self { entries }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            entries: vec![C64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.entries
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, C64> {
        self.entries.iter()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Inner product, conjugate-linear in `self`: returns selfᴴ · other.
    pub fn dot(&self, other: &CVector) -> C64 {
        debug_assert_eq!(self.len(), other.len());
        self.entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, factor: C64) -> CVector {
        CVector::new(self.entries.iter().map(|z| z * factor).collect())
    }

    pub fn add(&self, other: &CVector) -> CVector {
        debug_assert_eq!(self.len(), other.len());
        CVector::new(
            self.entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &CVector) -> CVector {
        debug_assert_eq!(self.len(), other.len());
        CVector::new(
            self.entries
                .iter()
                .zip(other.entries.iter())
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    /// Rescales in place to unit norm. Errors on (numerically) zero vectors.
    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n <= f64::MIN_POSITIVE {
            return Err(Error::Invalid("cannot normalize zero vector".into()));
        }
        for z in &mut self.entries {
            *z /= n;
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for CVector {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.entries[i]
    }
}

impl std::ops::IndexMut<usize> for CVector {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.entries[i]
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut entries = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                entries.push(f(r, c));
            }
        }
        debug_assert!(
            entries.iter().all(|z| z.re.is_finite() && z.im.is_finite()),
            "non-finite matrix entry"
        );
        Self {
            rows,
            cols,
            entries,
        }
    }

    /// Builds a matrix from row slices. All rows must share one length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::Dimension("ragged rows in matrix literal".into()));
        }
        let mut entries = Vec::with_capacity(height * width);
        for row in rows {
            entries.extend_from_slice(row);
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("non-finite matrix entry".into()));
        }
        Ok(Self {
            rows: height,
            cols: width,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> CVector {
        CVector::new(self.entries[r * self.cols..(r + 1) * self.cols].to_vec())
    }

    pub fn matvec(&self, x: &CVector) -> CVector {
        debug_assert_eq!(self.cols, x.len(), "matvec dimension mismatch");
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            out.push(
                row.iter()
                    .zip(x.as_slice())
                    .map(|(a, b)| a * b)
                    .sum::<C64>(),
            );
        }
        CVector::new(out)
    }

    pub fn adjoint(&self) -> CMatrix {
        CMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..other.cols {
                    out[(r, c)] += a * other[(k, c)];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| a + b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| a - b)
            .collect();
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn scale(&self, factor: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    /// Rank-one product u · vᴴ.
    pub fn outer(u: &CVector, v: &CVector) -> CMatrix {
        CMatrix::from_fn(u.len(), v.len(), |r, c| u[r] * v[c].conj())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Hermitian within `tol` relative to the Frobenius norm.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        for r in 0..self.rows {
            for c in r..self.cols {
                let d = self[(r, c)] - self[(c, r)].conj();
                if d.norm() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Quadratic form xᴴ A x.
    pub fn quadratic_form(&self, x: &CVector) -> C64 {
        x.dot(&self.matvec(x))
    }

    /// Column `c` as a vector.
    pub fn col(&self, c: usize) -> CVector {
        CVector::new((0..self.rows).map(|r| self[(r, c)]).collect())
    }

    pub fn set_col(&mut self, c: usize, v: &CVector) {
        debug_assert_eq!(v.len(), self.rows);
        for r in 0..self.rows {
            self[(r, c)] = v[r];
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.entries[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.entries[r * self.cols + c]
    }
}

/// Dominant eigenvalue of a Hermitian matrix together with a unit
/// eigenvector. The first component of the vector whose magnitude is at
/// least 1e-12 of the largest one is made real nonnegative so repeated
/// decompositions of one matrix agree.
#[derive(Debug, Clone)]
pub struct EigPair {
    pub value: f64,
    pub vector: CVector,
}

/// Thin-to-full singular value decomposition H = U diag(σ) Vᴴ with square
/// unitary factors and σ nonincreasing and nonnegative.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    pub left: CMatrix,
    pub singular_values: Vec<f64>,
    pub right: CMatrix,
}

/// Fixes the global phase of `v` so that its first component with magnitude
/// at least 1e-12 of the maximum is real nonnegative.
pub(crate) fn fix_phase(v: &mut CVector) {
    let max_mag = v.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if max_mag == 0.0 {
        return;
    }
    let pivot = v.iter().find(|z| z.norm() >= 1e-12 * max_mag);
    if let Some(&p) = pivot {
        let mag = p.norm();
        if mag > 0.0 {
            let rotation = p.conj() / mag;
            for z in v.as_mut_slice() {
                *z *= rotation;
            }
        }
    }
}
