//! Singular value decomposition by one-sided Jacobi rotations.
//!
//! Serves as the ground-truth oracle for the estimation pipeline; the
//! estimators themselves never touch it.

use super::matrix::{dot_conj, vec_norm2, ComplexMatrix, C64};
use crate::{Error, Result};

const JACOBI_REL_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 60;

/// Thin SVD factors `A ≈ left · diag(singulars) · right†`.
#[derive(Debug, Clone)]
pub struct SvdTriple {
    /// Semi-unitary left factor (rows × k).
    pub left: ComplexMatrix,
    /// Singular values, descending, nonnegative.
    pub singulars: Vec<f64>,
    /// Semi-unitary right factor (cols × k).
    pub right: ComplexMatrix,
}

/// Orthogonalize columns `i`, `j` of `b` (and track the rotation in `v`).
/// Returns false when the pair was already orthogonal to working precision.
fn rotate_pair(b: &mut Vec<Vec<C64>>, v: &mut Vec<Vec<C64>>, i: usize, j: usize) -> bool {
    let alpha: f64 = b[i].iter().map(|z| z.norm_sqr()).sum();
    let beta: f64 = b[j].iter().map(|z| z.norm_sqr()).sum();
    let gamma = dot_conj(&b[i], &b[j]);
    let g = gamma.norm();
    if g <= JACOBI_REL_TOL * (alpha * beta).sqrt() || g == 0.0 {
        return false;
    }
    let phase = gamma / g;
    let zeta = (beta - alpha) / (2.0 * g);
    let t = if zeta >= 0.0 {
        1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
    } else {
        -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = c * t;

    let rot = |cols: &mut Vec<Vec<C64>>| {
        let n = cols[i].len();
        for k in 0..n {
            let x = cols[i][k];
            let y = cols[j][k];
            cols[i][k] = c * x - s * phase.conj() * y;
            cols[j][k] = s * phase * x + c * y;
        }
    };
    rot(b);
    rot(v);
    true
}

fn jacobi_svd(a: &ComplexMatrix) -> Result<(Vec<Vec<C64>>, Vec<f64>, Vec<Vec<C64>>)> {
    let cols = a.cols();
    let mut b: Vec<Vec<C64>> = (0..cols).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<C64>> = (0..cols)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); cols];
            e[j] = C64::new(1.0, 0.0);
            e
        })
        .collect();

    let mut sweeps = 0;
    loop {
        let mut rotated = false;
        for i in 0..cols.saturating_sub(1) {
            for j in i + 1..cols {
                if rotate_pair(&mut b, &mut v, i, j) {
                    rotated = true;
                }
            }
        }
        sweeps += 1;
        if !rotated {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence {
                iterations: sweeps,
                residual: f64::NAN,
            });
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = b.iter().map(|col| vec_norm2(col)).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));
    let b_sorted: Vec<Vec<C64>> = order.iter().map(|&k| b[k].clone()).collect();
    let v_sorted: Vec<Vec<C64>> = order.iter().map(|&k| v[k].clone()).collect();
    let s_sorted: Vec<f64> = order.iter().map(|&k| norms[k]).collect();
    Ok((b_sorted, s_sorted, v_sorted))
}

/// Deterministically extend `existing` orthonormal columns with unit vectors
/// drawn from the standard basis (for null-space directions of rank-deficient
/// inputs).
fn complete_column(existing: &[Vec<C64>], dim: usize) -> Vec<C64> {
    for seed in 0..dim {
        let mut cand = vec![C64::new(0.0, 0.0); dim];
        cand[seed] = C64::new(1.0, 0.0);
        for _ in 0..2 {
            for q in existing {
                let c = dot_conj(q, &cand);
                for (ck, qk) in cand.iter_mut().zip(q) {
                    *ck -= c * qk;
                }
            }
        }
        let norm = vec_norm2(&cand);
        if norm > 1e-6 {
            for ck in cand.iter_mut() {
                *ck /= norm;
            }
            return cand;
        }
    }
    unreachable!("orthonormal completion always exists for k <= dim");
}

/// Top-`k` singular triple of `A`.
///
/// Rank-deficient inputs are fine: trailing singular values come out as
/// (numerical) zeros and the matching left/right columns are completed to an
/// orthonormal set.
pub fn svd_thin(a: &ComplexMatrix, k: usize) -> Result<SvdTriple> {
    let (rows, cols) = (a.rows(), a.cols());
    if k == 0 || k > rows.min(cols) {
        return Err(Error::DimensionMismatch(format!(
            "svd_thin: k={k} out of range for {rows}x{cols}"
        )));
    }
    // operate on the tall orientation so column count stays small
    let transposed = rows < cols;
    let work = if transposed { a.dagger() } else { a.clone() };

    let (b, sigma, v) = jacobi_svd(&work)?;
    let sig_max = sigma.first().copied().unwrap_or(0.0);
    let floor = sig_max * 1e-15;

    let mut u_cols: Vec<Vec<C64>> = Vec::with_capacity(k);
    for j in 0..k {
        if sigma[j] > floor && sigma[j] > 0.0 {
            u_cols.push(b[j].iter().map(|z| z / sigma[j]).collect());
        } else {
            u_cols.push(complete_column(&u_cols, work.rows()));
        }
    }
    let u = ComplexMatrix::from_cols(&u_cols);
    let vk = ComplexMatrix::from_cols(&v[..k].to_vec());
    let s: Vec<f64> = sigma[..k].to_vec();

    if transposed {
        Ok(SvdTriple {
            left: vk,
            singulars: s,
            right: u,
        })
    } else {
        Ok(SvdTriple {
            left: u,
            singulars: s,
            right: vk,
        })
    }
}

/// Largest singular value.
pub fn spectral_norm(a: &ComplexMatrix) -> f64 {
    svd_thin(a, 1).map(|t| t.singulars[0]).unwrap_or(0.0)
}

/// 2-norm condition number computed from the full singular spectrum.
pub fn condition_number(a: &ComplexMatrix) -> f64 {
    let k = a.rows().min(a.cols());
    match svd_thin(a, k) {
        Ok(t) => {
            let smin = t.singulars[k - 1];
            if smin <= 0.0 {
                f64::INFINITY
            } else {
                t.singulars[0] / smin
            }
        }
        Err(_) => f64::INFINITY,
    }
}
