//! Complex SVD built on the Hermitian eigensolver.
//!
//! The decomposition diagonalizes the smaller Gram matrix and recovers the
//! other factor by applying H. Singular values are recomputed as ||H v||
//! rather than sqrt(eigenvalue), which loses less accuracy for small
//! singular values. The factors are completed to square unitary matrices so
//! callers can index any column.

use super::{hermitian_eigendecomposition, C64, CMatrix, CVector, SvdTriple};
use crate::{Error, Result};

/// Relative threshold below which a singular value is treated as zero and
/// its left vector is produced by basis completion instead of H v / sigma.
const RANK_CUTOFF_REL: f64 = 1e-13;

/// Full SVD H = U diag(sigma) V^H with U (rows x rows) and V (cols x cols)
/// unitary and sigma nonincreasing, nonnegative, of length min(rows, cols).
pub fn svd_complex(h: &CMatrix) -> Result<SvdTriple> {
    if h.rows() == 0 || h.cols() == 0 {
        return Err(Error::Dimension("svd needs a nonempty matrix".into()));
    }
    if h.rows() < h.cols() {
        let t = svd_complex(&h.adjoint())?;
        return Ok(SvdTriple {
            left: t.right,
            singular_values: t.singular_values,
            right: t.left,
        });
    }

    let (q, m) = (h.rows(), h.cols());
    let gram = h.adjoint().mul(h);
    let gram = gram.add(&gram.adjoint()).scale(C64::new(0.5, 0.0));
    let (_, v) = hermitian_eigendecomposition(&gram)?;

    let mut raw: Vec<(f64, CVector, CVector)> = Vec::with_capacity(m);
    for i in 0..m {
        let vi = v.col(i);
        let w = h.matvec(&vi);
        raw.push((w.norm(), w, vi));
    }
    // Refinement can nudge near-equal values out of order; restore it.
    raw.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite singular values"));

    let sigma_max = raw.first().map_or(0.0, |r| r.0);
    let cutoff = RANK_CUTOFF_REL * sigma_max;

    let mut singular_values = Vec::with_capacity(m);
    let mut left_cols: Vec<CVector> = Vec::with_capacity(q);
    let mut right = CMatrix::zeros(m, m);
    for (i, (sv, w, vi)) in raw.iter().enumerate() {
        right.set_col(i, vi);
        if *sv > cutoff && sigma_max > 0.0 {
            singular_values.push(*sv);
            left_cols.push(w.scale(C64::new(1.0 / sv, 0.0)));
        } else {
            singular_values.push(0.0);
        }
    }
    complete_basis(&mut left_cols, q);

    let mut left = CMatrix::zeros(q, q);
    for (i, col) in left_cols.iter().enumerate() {
        left.set_col(i, col);
    }
    Ok(SvdTriple {
        left,
        singular_values,
        right,
    })
}

/// Extends an orthonormal set to a full basis of C^n by greedily picking the
/// canonical vector with the largest residual after projection.
fn complete_basis(cols: &mut Vec<CVector>, n: usize) {
    while cols.len() < n {
        let mut best: Option<CVector> = None;
        let mut best_norm = 0.0;
        for j in 0..n {
            let mut cand = CVector::zeros(n);
            cand[j] = C64::new(1.0, 0.0);
            for col in cols.iter() {
                let overlap = col.dot(&cand);
                cand = cand.sub(&col.scale(overlap));
            }
            let norm = cand.norm();
            if norm > best_norm {
                best_norm = norm;
                best = Some(cand);
            }
        }
        let mut chosen = best.expect("nonzero residual always exists");
        // Second projection pass tightens orthogonality for the invariants.
        for col in cols.iter() {
            let overlap = col.dot(&chosen);
            chosen = chosen.sub(&col.scale(overlap));
        }
        chosen.normalize().expect("residual stays nonzero");
        cols.push(chosen);
    }
}
