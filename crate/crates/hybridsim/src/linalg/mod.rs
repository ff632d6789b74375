//! Dense complex linear-algebra kernels shared by every other module: thin QR
//! with a fixed phase convention, a Hessenberg eigensolver, one-sided Jacobi
//! SVD, principal angles, and DFT matrices.
//!
//! Everything is a pure function of its inputs and safe to call from any
//! number of worker threads.

mod eig;
mod factor;
mod matrix;
mod svd;

pub use eig::{eig_dense, eigvals_dense, hessenberg_eig, hessenberg_reduce, HESSENBERG_TOL};
pub use factor::{determinant, inverse, least_squares, qr_factor, qr_orthonormal, solve, RANK_TOL};
pub use matrix::{
    dot_conj, vec_add, vec_norm2, vec_one_norm, vec_scale, vec_sub, vec_sub_scaled, ComplexMatrix,
    C64,
};
pub use svd::{condition_number, spectral_norm, svd_thin, SvdTriple};

use crate::Result;
use std::f64::consts::PI;

/// Principal angles (radians, ascending, in `[0, π/2]`) between the column
/// spans of `a` and `b`. Both must have the same shape and full column rank.
pub fn principal_angles(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Vec<f64>> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(crate::Error::DimensionMismatch(format!(
            "principal_angles: {}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let qa = qr_orthonormal(a)?;
    let qb = qr_orthonormal(b)?;
    let gram = qa.dagger().mul(&qb);
    let d = gram.rows().min(gram.cols());
    let triple = svd_thin(&gram, d)?;
    let mut angles: Vec<f64> = triple
        .singulars
        .iter()
        .map(|&s| s.clamp(0.0, 1.0).acos())
        .collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(angles)
}

/// Largest principal angle between two column spans.
pub fn largest_principal_angle(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    Ok(*principal_angles(a, b)?.last().unwrap())
}

/// Unitary DFT matrix: entry `(j,k) = exp(-2πi·jk/n)/√n`. Every entry has
/// modulus `1/√n`, so any block of columns is a valid bank of constant-modulus
/// combiners.
pub fn dft_matrix(n: usize) -> ComplexMatrix {
    assert!(n >= 1);
    let scale = 1.0 / (n as f64).sqrt();
    ComplexMatrix::from_fn(n, n, |j, k| {
        let angle = -2.0 * PI * (j as f64) * (k as f64) / (n as f64);
        C64::from_polar(scale, angle)
    })
}
