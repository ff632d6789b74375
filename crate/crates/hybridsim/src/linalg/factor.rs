//! QR factorization and small dense solves.

use super::matrix::{dot_conj, vec_norm2, ComplexMatrix, C64};
use crate::{Error, Result};

/// Relative column-norm floor below which a QR input counts as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Thin QR, `A = Q R`, by modified Gram-Schmidt with one full
/// re-orthogonalization pass.
///
/// The diagonal of `R` is real and nonnegative by construction (each entry is
/// a residual norm), which fixes the phase of every column of `Q` and makes
/// the factorization deterministic.
pub fn qr_factor(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let (rows, cols) = (a.rows(), a.cols());
    if cols > rows {
        return Err(Error::DimensionMismatch(format!(
            "thin QR needs cols <= rows, got {rows}x{cols}"
        )));
    }
    let max_col_norm = (0..cols)
        .map(|j| vec_norm2(&a.col(j)))
        .fold(0.0_f64, f64::max);
    let threshold = RANK_TOL * max_col_norm;

    let mut q_cols: Vec<Vec<C64>> = Vec::with_capacity(cols);
    let mut r = ComplexMatrix::zeros(cols, cols);
    for j in 0..cols {
        let mut v = a.col(j);
        for i in 0..j {
            let c = dot_conj(&q_cols[i], &v);
            for (vk, qk) in v.iter_mut().zip(&q_cols[i]) {
                *vk -= c * qk;
            }
            r[(i, j)] += c;
        }
        // second pass keeps orthogonality near machine precision
        for i in 0..j {
            let c = dot_conj(&q_cols[i], &v);
            for (vk, qk) in v.iter_mut().zip(&q_cols[i]) {
                *vk -= c * qk;
            }
            r[(i, j)] += c;
        }
        let norm = vec_norm2(&v);
        if norm <= threshold {
            return Err(Error::RankDeficient {
                col: j,
                norm,
                threshold,
            });
        }
        r[(j, j)] = C64::new(norm, 0.0);
        for vk in v.iter_mut() {
            *vk /= norm;
        }
        q_cols.push(v);
    }
    Ok((ComplexMatrix::from_cols(&q_cols), r))
}

/// Orthonormal basis for the column span of `A` (the `Q` of the thin QR).
pub fn qr_orthonormal(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    qr_factor(a).map(|(q, _)| q)
}

/// Least-squares solve `argmin_X ||A X - B||_F` via QR (`A` tall, full rank).
pub fn least_squares(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (q, r) = qr_factor(a)?;
    let rhs = q.dagger().mul(b);
    // back-substitute R X = Q† B
    let n = r.rows();
    let mut x = ComplexMatrix::zeros(n, rhs.cols());
    for col in 0..rhs.cols() {
        for i in (0..n).rev() {
            let mut acc = rhs[(i, col)];
            for k in i + 1..n {
                acc -= r[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = acc / r[(i, i)];
        }
    }
    Ok(x)
}

/// LU factorization with partial pivoting; returns (combined LU, pivots, sign swaps).
fn lu_decompose(a: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<usize>, usize)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch("LU needs a square matrix".into()));
    }
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let mut swaps = 0;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].norm();
        for i in k + 1..n {
            let m = lu[(i, k)].norm();
            if m > best {
                best = m;
                p = i;
            }
        }
        if best == 0.0 {
            return Err(Error::RankDeficient {
                col: k,
                norm: 0.0,
                threshold: 0.0,
            });
        }
        if p != k {
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
            piv.swap(k, p);
            swaps += 1;
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            for j in k + 1..n {
                let sub = factor * lu[(k, j)];
                lu[(i, j)] -= sub;
            }
        }
    }
    Ok((lu, piv, swaps))
}

/// Solve `A X = B` for square `A`.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::DimensionMismatch("solve rhs row mismatch".into()));
    }
    let (lu, piv, _) = lu_decompose(a)?;
    let mut x = ComplexMatrix::zeros(n, b.cols());
    for col in 0..b.cols() {
        // forward: L y = P b
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = b[(piv[i], col)];
            for k in 0..i {
                acc -= lu[(i, k)] * y[k];
            }
            y[i] = acc;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in i + 1..n {
                acc -= lu[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = acc / lu[(i, i)];
        }
    }
    Ok(x)
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    solve(a, &ComplexMatrix::identity(a.rows()))
}

/// Determinant via LU.
pub fn determinant(a: &ComplexMatrix) -> Result<C64> {
    let (lu, _, swaps) = lu_decompose(a)?;
    let mut det = if swaps % 2 == 0 {
        C64::new(1.0, 0.0)
    } else {
        C64::new(-1.0, 0.0)
    };
    for i in 0..lu.rows() {
        det *= lu[(i, i)];
    }
    Ok(det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::test_support::{assert_close, random_matrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qr_identity_is_fixed_point() {
        let i3 = ComplexMatrix::identity(3);
        let q = qr_orthonormal(&i3).unwrap();
        assert!(q.sub(&i3).fro_norm() < 1e-14);
    }

    #[test]
    fn qr_normalizes_single_column() {
        let a = ComplexMatrix::from_cols(&[vec![C64::new(3.0, 0.0), C64::new(4.0, 0.0)]]);
        let q = qr_orthonormal(&a).unwrap();
        assert_close(q[(0, 0)].re, 0.6, 1e-15);
        assert_close(q[(1, 0)].re, 0.8, 1e-15);
        assert!(q[(0, 0)].im.abs() < 1e-15 && q[(1, 0)].im.abs() < 1e-15);
    }

    #[test]
    fn qr_orthonormal_and_span_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_matrix(8, 3, &mut rng);
        let q = qr_orthonormal(&a).unwrap();
        let gram = q.dagger().mul(&q);
        assert!(gram.sub(&ComplexMatrix::identity(3)).fro_norm() < 1e-10);
        // projector onto span(Q) must reproduce A
        let proj = q.mul(&q.dagger().mul(&a));
        assert!(proj.sub(&a).fro_norm() <= 1e-9);
    }

    #[test]
    fn qr_idempotent_on_semi_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let q0 = qr_orthonormal(&random_matrix(10, 4, &mut rng)).unwrap();
        let q1 = qr_orthonormal(&q0).unwrap();
        assert!(q1.sub(&q0).fro_norm() <= 1e-10);
    }

    #[test]
    fn qr_rejects_rank_deficient() {
        let c = vec![C64::new(1.0, 0.0), C64::new(2.0, 0.0)];
        let a = ComplexMatrix::from_cols(&[c.clone(), c]);
        match qr_factor(&a) {
            Err(Error::RankDeficient { col, .. }) => assert_eq!(col, 1),
            other => panic!("expected RankDeficient, got {other:?}"),
        }
    }

    #[test]
    fn qr_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(7, 5, &mut rng);
        let (q, r) = qr_factor(&a).unwrap();
        assert!(q.mul(&r).sub(&a).fro_norm() < 1e-12);
        for j in 0..5 {
            assert!(r[(j, j)].im.abs() < 1e-15 && r[(j, j)].re >= 0.0);
        }
    }

    #[test]
    fn solve_and_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(5, 5, &mut rng);
        let x_true = random_matrix(5, 2, &mut rng);
        let b = a.mul(&x_true);
        let x = solve(&a, &b).unwrap();
        assert!(x.sub(&x_true).fro_norm() < 1e-10);

        let inv = inverse(&a).unwrap();
        assert!(a.mul(&inv).sub(&ComplexMatrix::identity(5)).fro_norm() < 1e-10);

        let det_a = determinant(&a).unwrap();
        let det_inv = determinant(&inv).unwrap();
        assert!((det_a * det_inv - C64::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(8, 3, &mut rng);
        let b = random_matrix(8, 2, &mut rng);
        let x = least_squares(&a, &b).unwrap();
        // residual must be orthogonal to the column span of A
        let resid = b.sub(&a.mul(&x));
        assert!(a.dagger().mul(&resid).fro_norm() < 1e-10);
    }
}
