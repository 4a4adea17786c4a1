//! Hermitian eigensolvers.
//!
//! `hermitian_max_eigpair` is the routine the optimizers call in their inner
//! loops; it runs a shifted power iteration and falls back to the full
//! decomposition when the spectral gap is too small for the iteration to
//! close. `hermitian_eigendecomposition` reduces to real symmetric
//! tridiagonal form with Householder reflections and applies implicit QL
//! with Wilkinson shifts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{fix_phase, C64, CMatrix, CVector, EigPair};
use crate::{Error, Result};

/// Fixed seed for the power-iteration start vector. A pseudorandom start
/// avoids accidental orthogonality to the dominant eigenvector; fixing the
/// seed keeps every decomposition reproducible.
const POWER_START_SEED: u64 = 0x7770745f656967;

/// Iteration cap for the power method before handing over to the dense
/// decomposition. Generous because each step is one small matvec.
const POWER_MAX_ITERS: usize = 10_000;

/// Residual target relative to the Frobenius norm of the input.
const POWER_RESIDUAL_REL: f64 = 1e-12;

fn check_square_hermitian(a: &CMatrix) -> Result<()> {
    if a.rows() == 0 {
        return Err(Error::Dimension("eigensolver needs a nonempty matrix".into()));
    }
    if a.rows() != a.cols() {
        return Err(Error::Dimension(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.is_hermitian(1e-12) {
        return Err(Error::Invalid("matrix is not Hermitian".into()));
    }
    Ok(())
}

/// Dominant eigenpair of a Hermitian matrix.
///
/// The returned eigenvalue is the algebraically largest one. Indefinite
/// inputs are handled by iterating on A + cI with c the Frobenius norm,
/// which makes the target eigenvalue the one of largest modulus without
/// changing eigenvectors.
pub fn hermitian_max_eigpair(a: &CMatrix) -> Result<EigPair> {
    check_square_hermitian(a)?;
    let n = a.rows();
    let anorm = a.frobenius_norm();
    if anorm == 0.0 {
        let mut v = CVector::zeros(n);
        v[0] = C64::new(1.0, 0.0);
        return Ok(EigPair { value: 0.0, vector: v });
    }

    let mut v = random_unit_vector(n);
    for _ in 0..POWER_MAX_ITERS {
        let w = a.matvec(&v);
        let lambda = v.dot(&w).re;
        let residual = w.sub(&v.scale(C64::new(lambda, 0.0))).norm();
        if residual <= POWER_RESIDUAL_REL * anorm {
            fix_phase(&mut v);
            return Ok(EigPair { value: lambda, vector: v });
        }
        // Shifted step: (A + cI) v keeps the algebraically largest
        // eigenvalue dominant in modulus even when A is indefinite.
        let mut next = w.add(&v.scale(C64::new(anorm, 0.0)));
        if next.normalize().is_err() {
            break;
        }
        v = next;
    }

    // Tiny spectral gap or an unlucky cancellation: do the whole spectrum.
    let (values, vectors) = hermitian_eigendecomposition(a)?;
    let mut vector = vectors.col(0);
    fix_phase(&mut vector);
    Ok(EigPair {
        value: values[0],
        vector,
    })
}

/// Full eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in descending order and a unitary matrix whose
/// columns are the matching eigenvectors, each phase-fixed so the first
/// non-negligible component is real nonnegative.
pub fn hermitian_eigendecomposition(a: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    check_square_hermitian(a)?;
    let n = a.rows();
    let (mut d, mut e, mut q) = householder_tridiagonalize(a);
    implicit_ql(&mut d, &mut e, &mut q)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("finite eigenvalues"));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = q.col(src);
        fix_phase(&mut col);
        vectors.set_col(dst, &col);
    }
    Ok((values, vectors))
}

/// Reduces A to real symmetric tridiagonal form T = Qᴴ A Q.
///
/// Returns the diagonal `d` (length n), the subdiagonal `e` (length n with a
/// trailing zero so downstream indexing stays simple) and the accumulated
/// unitary Q, already combined with the diagonal phase scaling that makes
/// the subdiagonal real nonnegative.
fn householder_tridiagonalize(a: &CMatrix) -> (Vec<f64>, Vec<f64>, CMatrix) {
    let n = a.rows();
    let mut w = a.clone();
    let mut q = CMatrix::identity(n);

    for k in 0..n.saturating_sub(2) {
        let off = k + 1;
        let m = n - off;
        let mut x = Vec::with_capacity(m);
        for i in 0..m {
            x.push(w[(off + i, k)]);
        }
        let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if xnorm == 0.0 {
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        // Reflect x onto -phase * ||x|| * e1; adding the norms avoids
        // cancellation in the leading component.
        let mut u = x;
        u[0] = x0 + phase * xnorm;
        let unorm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut u {
            *z /= unorm;
        }

        // W <- H W with H = I - 2uu^H acting on rows off..n.
        for c in 0..n {
            let t: C64 = (0..m).map(|i| u[i].conj() * w[(off + i, c)]).sum();
            let t2 = t * 2.0;
            for i in 0..m {
                let delta = u[i] * t2;
                w[(off + i, c)] -= delta;
            }
        }
        // W <- W H on columns off..n.
        for r in 0..n {
            let t: C64 = (0..m).map(|i| w[(r, off + i)] * u[i]).sum();
            let t2 = t * 2.0;
            for i in 0..m {
                let delta = t2 * u[i].conj();
                w[(r, off + i)] -= delta;
            }
        }
        // Q <- Q H.
        for r in 0..n {
            let t: C64 = (0..m).map(|i| q[(r, off + i)] * u[i]).sum();
            let t2 = t * 2.0;
            for i in 0..m {
                let delta = t2 * u[i].conj();
                q[(r, off + i)] -= delta;
            }
        }
    }

    // Diagonal phase scaling turns the complex subdiagonal real nonnegative:
    // p(i+1) = p(i) * e(i)/|e(i)| maps T to D^H T D with D = diag(p).
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    let mut p = vec![C64::new(1.0, 0.0); n];
    for i in 0..n {
        d[i] = w[(i, i)].re;
    }
    for i in 0..n - 1 {
        let sub = w[(i + 1, i)];
        let mag = sub.norm();
        if mag > 0.0 {
            p[i + 1] = p[i] * (sub / mag);
            e[i] = mag;
        } else {
            p[i + 1] = p[i];
            e[i] = 0.0;
        }
    }
    for c in 0..n {
        for r in 0..n {
            let scaled = q[(r, c)] * p[c];
            q[(r, c)] = scaled;
        }
    }
    (d, e, q)
}

/// Implicit QL with Wilkinson shifts on a real symmetric tridiagonal
/// matrix, accumulating the (complex) eigenvector matrix in place.
///
/// `e` must have length n with `e[n-1] == 0`; `e[i]` couples `d[i]` and
/// `d[i+1]`.
fn implicit_ql(d: &mut [f64], e: &mut [f64], z: &mut CMatrix) -> Result<()> {
    let n = d.len();
    if n == 1 {
        return Ok(());
    }
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let tst1 = d[m].abs() + d[m + 1].abs();
                if tst1 + e[m].abs() == tst1 {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > 50 {
                return Err(Error::NoConvergence(format!(
                    "tridiagonal QL stalled at index {l}"
                )));
            }

            let pl = d[l];
            let mut g = (d[l + 1] - pl) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - pl + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..z.rows() {
                    let fk = z[(k, i + 1)];
                    z[(k, i + 1)] = z[(k, i)] * s + fk * c;
                    z[(k, i)] = z[(k, i)] * c - fk * s;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn random_unit_vector(n: usize) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_START_SEED);
    let mut v = CVector::new(
        (0..n)
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                C64::new(re, im)
            })
            .collect(),
    );
    v.normalize().expect("normal draws are nonzero");
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = CMatrix::from_fn(n, n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            c(re, im)
        });
        b.add(&b.adjoint()).scale(c(0.5, 0.0))
    }

    /// Cyclic two-sided Jacobi for Hermitian matrices. Independent of the
    /// Householder/QL route; used only to cross-check it.
    fn jacobi_eig(a: &CMatrix) -> (Vec<f64>, CMatrix) {
        let n = a.rows();
        let mut w = a.clone();
        let mut v = CMatrix::identity(n);
        let scale = a.frobenius_norm().max(f64::MIN_POSITIVE);
        for _sweep in 0..200 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += w[(p, q)].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-14 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = w[(p, q)];
                    let beta = apq.norm();
                    if beta <= 1e-300 {
                        continue;
                    }
                    let phi = apq / beta;
                    let tau = (w[(q, q)].re - w[(p, p)].re) / (2.0 * beta);
                    let t = if tau == 0.0 {
                        1.0
                    } else {
                        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
                    };
                    let cs = 1.0 / (1.0 + t * t).sqrt();
                    let sn = t * cs;
                    // Unitary J with columns (cs, -sn e^{-i phi}) and
                    // (sn e^{i phi}, cs); J^H W J zeroes the (p,q) entry.
                    let j11 = c(cs, 0.0);
                    let j12 = phi * sn;
                    let j21 = -phi.conj() * sn;
                    let j22 = c(cs, 0.0);
                    for k in 0..n {
                        let wp = w[(p, k)];
                        let wq = w[(q, k)];
                        w[(p, k)] = j11.conj() * wp + j21.conj() * wq;
                        w[(q, k)] = j12.conj() * wp + j22.conj() * wq;
                    }
                    for k in 0..n {
                        let wp = w[(k, p)];
                        let wq = w[(k, q)];
                        w[(k, p)] = wp * j11 + wq * j21;
                        w[(k, q)] = wp * j12 + wq * j22;
                    }
                    for k in 0..n {
                        let vp = v[(k, p)];
                        let vq = v[(k, q)];
                        v[(k, p)] = vp * j11 + vq * j21;
                        v[(k, q)] = vp * j12 + vq * j22;
                    }
                }
            }
        }
        let mut pairs: Vec<(f64, CVector)> = (0..n).map(|i| (w[(i, i)].re, v.col(i))).collect();
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        // The oracle checks its own residuals so a broken oracle cannot
        // silently agree with a broken solver.
        for (val, vec) in &pairs {
            let resid = a
                .matvec(vec)
                .sub(&vec.scale(c(*val, 0.0)))
                .norm();
            assert!(
                resid <= 1e-9 * scale,
                "jacobi residual {resid:e} too large"
            );
        }
        let values = pairs.iter().map(|p| p.0).collect();
        let mut vectors = CMatrix::zeros(n, n);
        for (i, (_, vec)) in pairs.iter().enumerate() {
            vectors.set_col(i, vec);
        }
        (values, vectors)
    }

    #[test]
    fn diagonal_matrix_dominant_pair() {
        let a = CMatrix::from_rows(&[
            vec![c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(-2.0, 0.0)],
        ])
        .unwrap();
        let pair = hermitian_max_eigpair(&a).unwrap();
        assert!((pair.value - 3.0).abs() < 1e-12);
        assert!((pair.vector[0].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_by_two_with_complex_coupling() {
        // [[2, i], [-i, 2]] has eigenvalues 3 and 1.
        let a = CMatrix::from_rows(&[
            vec![c(2.0, 0.0), c(0.0, 1.0)],
            vec![c(0.0, -1.0), c(2.0, 0.0)],
        ])
        .unwrap();
        let pair = hermitian_max_eigpair(&a).unwrap();
        assert!((pair.value - 3.0).abs() < 1e-11);
        // Phase-fixed eigenvector (1, -i)/sqrt(2).
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        assert!((pair.vector[0] - c(inv_sqrt2, 0.0)).norm() < 1e-9);
        assert!((pair.vector[1] - c(0.0, -inv_sqrt2)).norm() < 1e-9);
    }

    #[test]
    fn negative_definite_matrix_returns_largest_algebraic() {
        let a = CMatrix::from_rows(&[
            vec![c(-3.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(-1.0, 0.0)],
        ])
        .unwrap();
        let pair = hermitian_max_eigpair(&a).unwrap();
        assert!((pair.value + 1.0).abs() < 1e-12);
        assert!((pair.vector[1].norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_is_fine() {
        let a = CMatrix::zeros(4, 4);
        let pair = hermitian_max_eigpair(&a).unwrap();
        assert_eq!(pair.value, 0.0);
        assert!((pair.vector.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_square_and_non_hermitian() {
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(
            hermitian_max_eigpair(&rect),
            Err(Error::Dimension(_))
        ));
        let skew = CMatrix::from_rows(&[
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(2.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        assert!(matches!(hermitian_max_eigpair(&skew), Err(Error::Invalid(_))));
    }

    #[test]
    fn full_decomposition_matches_jacobi_oracle() {
        for seed in [1u64, 2, 3] {
            let a = random_hermitian(8, seed);
            let (values, vectors) = hermitian_eigendecomposition(&a).unwrap();
            let (oracle_values, _) = jacobi_eig(&a);
            for (v, o) in values.iter().zip(oracle_values.iter()) {
                assert!(
                    (v - o).abs() <= 1e-9 * a.frobenius_norm().max(1.0),
                    "eigenvalue mismatch: {v} vs oracle {o}"
                );
            }
            for (i, &value) in values.iter().enumerate() {
                let col = vectors.col(i);
                assert!((col.norm() - 1.0).abs() < 1e-10);
                let resid = a.matvec(&col).sub(&col.scale(c(value, 0.0))).norm();
                assert!(resid <= 1e-9 * a.frobenius_norm());
            }
        }
    }

    #[test]
    fn power_iteration_matches_full_decomposition() {
        for seed in [11u64, 12, 13, 14] {
            let a = random_hermitian(6, seed);
            let pair = hermitian_max_eigpair(&a).unwrap();
            let (values, vectors) = hermitian_eigendecomposition(&a).unwrap();
            assert!((pair.value - values[0]).abs() <= 1e-9 * a.frobenius_norm());
            // Same vector up to sign of the overlap magnitude.
            let overlap = pair.vector.dot(&vectors.col(0)).norm();
            assert!(overlap > 1.0 - 1e-8, "overlap {overlap}");
        }
    }

    #[test]
    fn clustered_spectrum_still_meets_residual_contract() {
        // Two leading eigenvalues separated by ~1e-14 force the dense
        // fallback; the residual contract must hold regardless of the path.
        let n = 4;
        let mut diag = CMatrix::zeros(n, n);
        diag[(0, 0)] = c(1.0, 0.0);
        diag[(1, 1)] = c(1.0 - 1e-14, 0.0);
        diag[(2, 2)] = c(0.3, 0.0);
        diag[(3, 3)] = c(-0.2, 0.0);
        let u = {
            let b = random_hermitian(n, 99);
            let (_, vecs) = hermitian_eigendecomposition(&b).unwrap();
            vecs
        };
        let a = u.mul(&diag).mul(&u.adjoint());
        let a = a.add(&a.adjoint()).scale(c(0.5, 0.0));
        let pair = hermitian_max_eigpair(&a).unwrap();
        let resid = a
            .matvec(&pair.vector)
            .sub(&pair.vector.scale(c(pair.value, 0.0)))
            .norm();
        assert!(resid <= 1e-9 * a.frobenius_norm());
        assert!((pair.value - 1.0).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn dominant_value_bounds_random_rayleigh_quotients(
            n in 1usize..9,
            seed in 0u64..5000,
        ) {
            let a = random_hermitian(n, seed);
            let pair = hermitian_max_eigpair(&a).unwrap();
            prop_assert!((pair.vector.norm() - 1.0).abs() <= 1e-10);
            let resid = a
                .matvec(&pair.vector)
                .sub(&pair.vector.scale(c(pair.value, 0.0)))
                .norm();
            prop_assert!(resid <= 1e-9 * a.frobenius_norm().max(f64::MIN_POSITIVE));
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
            for _ in 0..4 {
                let mut x = CVector::new((0..n).map(|_| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    c(re, im)
                }).collect());
                if x.normalize().is_err() { continue; }
                let rayleigh = x.dot(&a.matvec(&x)).re;
                prop_assert!(rayleigh <= pair.value + 1e-9 * a.frobenius_norm().max(1.0));
            }
        }

        #[test]
        fn decomposition_reconstructs_input(n in 1usize..8, seed in 0u64..5000) {
            let a = random_hermitian(n, seed);
            let (values, vectors) = hermitian_eigendecomposition(&a).unwrap();
            // Unitarity.
            let gram = vectors.adjoint().mul(&vectors);
            let eye = CMatrix::identity(n);
            prop_assert!(gram.sub(&eye).frobenius_norm() <= 1e-10 * (n as f64));
            // Reconstruction.
            let mut lambda = CMatrix::zeros(n, n);
            for i in 0..n {
                lambda[(i, i)] = c(values[i], 0.0);
            }
            let rebuilt = vectors.mul(&lambda).mul(&vectors.adjoint());
            prop_assert!(
                rebuilt.sub(&a).frobenius_norm()
                    <= 1e-9 * a.frobenius_norm().max(f64::MIN_POSITIVE)
            );
            // Ordering.
            for w in values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }
    }
}
