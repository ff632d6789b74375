//! Dense non-Hermitian eigensolver: Householder reduction to Hessenberg form
//! followed by a shifted (Wilkinson) QR iteration with Givens rotations,
//! accumulating the Schur vectors. Eigenvectors come from back-substitution
//! on the triangular factor.
//!
//! Sized for the small projected matrices this simulator produces (m ≤ 32);
//! the iteration cap is `100·m`.

use super::matrix::{vec_norm2, ComplexMatrix, C64};
use crate::{Error, Result};

/// Entries below the first subdiagonal are tolerated up to this relative level.
pub const HESSENBERG_TOL: f64 = 1e-12;

const ITER_CAP_PER_DIM: usize = 100;

struct Givens {
    c: f64,
    s: C64,
}

/// Rotation G = [[c, s], [-s̄, c]] with c real such that G·(a, b)ᵀ = (r, 0)ᵀ.
fn givens(a: C64, b: C64) -> Givens {
    let bn = b.norm();
    if bn == 0.0 {
        return Givens {
            c: 1.0,
            s: C64::new(0.0, 0.0),
        };
    }
    let an = a.norm();
    if an == 0.0 {
        return Givens {
            c: 0.0,
            s: b.conj() / bn,
        };
    }
    let r = an.hypot(bn);
    Givens {
        c: an / r,
        s: (a / an) * (b.conj() / r),
    }
}

fn apply_left(h: &mut ComplexMatrix, g: &Givens, k: usize, col_lo: usize, col_hi: usize) {
    for j in col_lo..col_hi {
        let top = h[(k, j)];
        let bot = h[(k + 1, j)];
        h[(k, j)] = g.c * top + g.s * bot;
        h[(k + 1, j)] = -g.s.conj() * top + g.c * bot;
    }
}

fn apply_right(h: &mut ComplexMatrix, g: &Givens, k: usize, row_lo: usize, row_hi: usize) {
    for i in row_lo..row_hi {
        let left = h[(i, k)];
        let right = h[(i, k + 1)];
        h[(i, k)] = g.c * left + g.s.conj() * right;
        h[(i, k + 1)] = -g.s * left + g.c * right;
    }
}

/// Eigenvalue of the trailing 2x2 block closest to its bottom-right entry.
fn wilkinson_shift(h: &ComplexMatrix, hi: usize) -> C64 {
    let a = h[(hi - 2, hi - 2)];
    let b = h[(hi - 2, hi - 1)];
    let c = h[(hi - 1, hi - 2)];
    let d = h[(hi - 1, hi - 1)];
    let half = (a - d) * 0.5;
    let disc = (half * half + b * c).sqrt();
    let lam1 = (a + d) * 0.5 + disc;
    let lam2 = (a + d) * 0.5 - disc;
    if (lam1 - d).norm() < (lam2 - d).norm() {
        lam1
    } else {
        lam2
    }
}

/// One explicit-shift QR step on the active block `lo..hi`, with the
/// embedded similarity carried across the coupling blocks (rows above the
/// block, columns to its right) and accumulated into `z`.
fn qr_step(h: &mut ComplexMatrix, z: &mut ComplexMatrix, lo: usize, hi: usize, shift: C64) {
    let n = h.rows();
    for i in lo..hi {
        let v = h[(i, i)] - shift;
        h[(i, i)] = v;
    }
    let mut rots = Vec::with_capacity(hi - lo);
    for k in lo..hi - 1 {
        let g = givens(h[(k, k)], h[(k + 1, k)]);
        apply_left(h, &g, k, k, n);
        h[(k + 1, k)] = C64::new(0.0, 0.0);
        rots.push((k, g));
    }
    for (k, g) in &rots {
        apply_right(h, g, *k, 0, (*k + 2).min(hi));
        apply_right(z, g, *k, 0, n);
    }
    for i in lo..hi {
        let v = h[(i, i)] + shift;
        h[(i, i)] = v;
    }
}

/// Schur decomposition `T = Z U Z†` of a Hessenberg matrix; `U` upper
/// triangular with the eigenvalues on its diagonal.
fn hessenberg_schur(t: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = t.rows();
    let mut h = t.clone();
    let mut z = ComplexMatrix::identity(n);
    let scale = h.fro_norm().max(1.0);
    let eps = f64::EPSILON * scale;

    let cap = ITER_CAP_PER_DIM * n;
    let mut iters = 0;
    let mut stagnation = 0usize;
    let mut hi = n;
    while hi > 1 {
        for k in 1..hi {
            let sub = h[(k, k - 1)].norm();
            if sub <= f64::EPSILON * (h[(k - 1, k - 1)].norm() + h[(k, k)].norm()).max(eps) {
                h[(k, k - 1)] = C64::new(0.0, 0.0);
            }
        }
        if h[(hi - 1, hi - 2)].norm() == 0.0 {
            hi -= 1;
            stagnation = 0;
            continue;
        }
        let mut lo = hi - 1;
        while lo > 0 && h[(lo, lo - 1)].norm() != 0.0 {
            lo -= 1;
        }
        iters += 1;
        stagnation += 1;
        if iters > cap {
            let residual = (1..hi)
                .map(|k| h[(k, k - 1)].norm())
                .fold(0.0_f64, f64::max);
            return Err(Error::NonConvergence {
                iterations: iters,
                residual,
            });
        }
        // an occasional exceptional shift breaks shift cycles
        let shift = if stagnation % 17 == 0 {
            h[(hi - 1, hi - 1)] + C64::new(h[(hi - 1, hi - 2)].norm(), 0.0)
        } else {
            wilkinson_shift(&h, hi)
        };
        qr_step(&mut h, &mut z, lo, hi, shift);
    }
    Ok((z, h))
}

/// Eigenvector of the triangular `u` for the eigenvalue at diagonal index `i`,
/// by back-substitution.
fn triangular_eigvec(u: &ComplexMatrix, i: usize) -> Vec<C64> {
    let n = u.rows();
    let lam = u[(i, i)];
    let smin = 1e-300_f64.max(f64::EPSILON * u.fro_norm());
    let mut y = vec![C64::new(0.0, 0.0); n];
    y[i] = C64::new(1.0, 0.0);
    for k in (0..i).rev() {
        let mut acc = C64::new(0.0, 0.0);
        for j in k + 1..=i {
            acc += u[(k, j)] * y[j];
        }
        let mut denom = u[(k, k)] - lam;
        if denom.norm() < smin {
            denom = C64::new(smin, 0.0);
        }
        y[k] = -acc / denom;
    }
    y
}

fn sort_pairs(vals: &mut [C64], vecs: &mut Vec<Vec<C64>>) {
    // magnitudes within fp noise of each other count as tied, so the
    // real/imaginary tie-break stays deterministic across round-off
    let scale = vals.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let tie = 1e-12 * scale;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| {
        let (la, lb) = (vals[a], vals[b]);
        let by_mag = if (la.norm() - lb.norm()).abs() <= tie {
            std::cmp::Ordering::Equal
        } else {
            lb.norm().partial_cmp(&la.norm()).unwrap()
        };
        by_mag
            .then(lb.re.partial_cmp(&la.re).unwrap())
            .then(lb.im.partial_cmp(&la.im).unwrap())
    });
    let sorted_vals: Vec<C64> = order.iter().map(|&i| vals[i]).collect();
    let sorted_vecs: Vec<Vec<C64>> = order.iter().map(|&i| vecs[i].clone()).collect();
    vals.copy_from_slice(&sorted_vals);
    *vecs = sorted_vecs;
}

/// Eigendecomposition of a (near-)upper-Hessenberg matrix.
///
/// Eigenvalues are sorted by descending magnitude, ties broken by descending
/// real part then descending imaginary part; eigenvector columns are
/// unit-norm. Entries below the first subdiagonal must already be negligible
/// (≤ [`HESSENBERG_TOL`] relative to the matrix scale).
pub fn hessenberg_eig(t: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<C64>)> {
    let n = t.rows();
    if t.cols() != n {
        return Err(Error::DimensionMismatch(
            "eigendecomposition needs a square matrix".into(),
        ));
    }
    let scale = t.fro_norm().max(1.0);
    let mut h = t.clone();
    for i in 2..n {
        for j in 0..i - 1 {
            if h[(i, j)].norm() > HESSENBERG_TOL * scale {
                return Err(Error::DimensionMismatch(format!(
                    "entry ({i},{j}) below the subdiagonal is {:.3e}, not Hessenberg",
                    h[(i, j)].norm()
                )));
            }
            h[(i, j)] = C64::new(0.0, 0.0);
        }
    }
    if n == 1 {
        return Ok((ComplexMatrix::identity(1), vec![h[(0, 0)]]));
    }
    let (z, u) = hessenberg_schur(&h)?;
    let mut vals: Vec<C64> = (0..n).map(|i| u[(i, i)]).collect();
    let mut vecs: Vec<Vec<C64>> = Vec::with_capacity(n);
    for i in 0..n {
        let y = triangular_eigvec(&u, i);
        let mut v = z.mul_vec(&y);
        let norm = vec_norm2(&v);
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        vecs.push(v);
    }
    sort_pairs(&mut vals, &mut vecs);
    Ok((ComplexMatrix::from_cols(&vecs), vals))
}

/// Householder similarity reduction `A = P H P†` with `H` upper Hessenberg and
/// `P` unitary.
pub fn hessenberg_reduce(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::DimensionMismatch(
            "Hessenberg reduction needs a square matrix".into(),
        ));
    }
    let mut h = a.clone();
    let mut p = ComplexMatrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let xnorm = vec_norm2(&x);
        if xnorm <= f64::EPSILON * h.fro_norm() {
            continue;
        }
        let x0 = x[0];
        let phase = if x0.norm() > 0.0 {
            x0 / x0.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        let alpha = -phase * xnorm;
        let mut v = x;
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm_sq == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm_sq;
        // H ← (I - β v v†) H, rows k+1..n
        for j in 0..n {
            let mut dot = C64::new(0.0, 0.0);
            for (idx, vi) in v.iter().enumerate() {
                dot += vi.conj() * h[(k + 1 + idx, j)];
            }
            dot *= beta;
            for (idx, vi) in v.iter().enumerate() {
                let delta = vi * dot;
                h[(k + 1 + idx, j)] -= delta;
            }
        }
        // H ← H (I - β v v†), cols k+1..n
        for i in 0..n {
            let mut dot = C64::new(0.0, 0.0);
            for (idx, vi) in v.iter().enumerate() {
                dot += h[(i, k + 1 + idx)] * vi;
            }
            dot *= beta;
            for (idx, vi) in v.iter().enumerate() {
                let delta = dot * vi.conj();
                h[(i, k + 1 + idx)] -= delta;
            }
        }
        // P ← P (I - β v v†)
        for i in 0..n {
            let mut dot = C64::new(0.0, 0.0);
            for (idx, vi) in v.iter().enumerate() {
                dot += p[(i, k + 1 + idx)] * vi;
            }
            dot *= beta;
            for (idx, vi) in v.iter().enumerate() {
                let delta = dot * vi.conj();
                p[(i, k + 1 + idx)] -= delta;
            }
        }
        for i in k + 2..n {
            h[(i, k)] = C64::new(0.0, 0.0);
        }
        h[(k + 1, k)] = alpha;
    }
    Ok((p, h))
}

/// Eigendecomposition of a general square matrix (reduction to Hessenberg,
/// then the shifted QR path). Same ordering contract as [`hessenberg_eig`].
pub fn eig_dense(a: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<C64>)> {
    let (p, h) = hessenberg_reduce(a)?;
    let (vecs_h, vals) = hessenberg_eig(&h)?;
    Ok((p.mul(&vecs_h), vals))
}

/// Eigenvalues only.
pub fn eigvals_dense(a: &ComplexMatrix) -> Result<Vec<C64>> {
    eig_dense(a).map(|(_, vals)| vals)
}
