//! Rate and subspace-quality metrics.

use crate::linalg::{condition_number, determinant, svd_thin, ComplexMatrix};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// User rate (bits/s/Hz) of the effective link through the given precoders
/// and combiners at linear `snr`:
/// `log₂|I + snr·(U†W†HFG)(U†W†HFG)†·(U†W†WU)⁻¹|`,
/// evaluated as a ratio of two small Hermitian determinants.
pub fn user_rate(
    h: &ComplexMatrix,
    f: &ComplexMatrix,
    g: &ComplexMatrix,
    w: &ComplexMatrix,
    u: &ComplexMatrix,
    snr: f64,
) -> Result<f64> {
    let combiner = w.mul(u); // N×d
    let gram = combiner.dagger().mul(&combiner); // U†W†WU
    let cond = condition_number(&gram);
    if cond > 1e12 {
        return Err(Error::SingularCombiner { cond });
    }
    let effective = combiner.dagger().mul(&h.mul(&f.mul(g))); // d×d
    let signal = effective.mul(&effective.dagger()).scale_re(snr);
    // |I + snr·S·G⁻¹| = |G + snr·S| / |G|
    let num = determinant(&gram.add(&signal))?;
    let den = determinant(&gram)?;
    Ok((num.norm() / den.norm()).log2())
}

/// Maximum achievable rate with ideal fully digital precoders: uniform power
/// over the top `d` singular modes of `h`.
pub fn optimal_rate(h: &ComplexMatrix, d: usize, snr: f64) -> Result<f64> {
    let triple = svd_thin(h, d)?;
    Ok(triple
        .singulars
        .iter()
        .map(|s| (1.0 + snr * s * s).log2())
        .sum())
}

/// Squared Frobenius distance between a basis and its factored approximation.
pub fn subspace_distance(target: &ComplexMatrix, f: &ComplexMatrix, g: &ComplexMatrix) -> f64 {
    target.sub(&f.mul(g)).fro_norm_sq()
}

/// Waterfilling over estimated singular values with total budget
/// `sigmas.len()`: `p_i = max(0, μ − 1/(snr·σ_i²))` with the level `μ` chosen
/// so active allocations sum to the budget.
pub fn waterfill(sigmas: &[f64], snr: f64) -> Vec<f64> {
    let d = sigmas.len();
    let budget = d as f64;
    // inverse gains, infinite for dead streams
    let inv: Vec<f64> = sigmas
        .iter()
        .map(|&s| {
            if s > 0.0 && snr > 0.0 {
                1.0 / (snr * s * s)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| inv[a].partial_cmp(&inv[b]).unwrap());

    let mut alloc = vec![0.0; d];
    for active in (1..=d).rev() {
        let idx = &order[..active];
        if idx.iter().any(|&i| inv[i].is_infinite()) {
            continue;
        }
        let level = (budget + idx.iter().map(|&i| inv[i]).sum::<f64>()) / active as f64;
        if level >= inv[idx[active - 1]] {
            for &i in idx {
                alloc[i] = level - inv[i];
            }
            break;
        }
    }
    alloc
}

/// Row of the Monte Carlo sweep output. `bound_slack` only applies to schemes
/// with a per-trial perturbation certificate; the mean-angle column is a
/// secondary serialization of the subspace error (largest angle stays the
/// headline).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub scheme: String,
    pub snr_db: f64,
    pub trial: u64,
    pub rate_bits: f64,
    pub opt_rate_bits: f64,
    pub subspace_angle_rad: f64,
    pub subspace_angle_mean_rad: f64,
    pub decomp_dist: f64,
    pub overhead_uses: u64,
    pub bound_slack: Option<f64>,
    pub rate_waterfill_bits: Option<f64>,
    pub status: String,
    pub channel_hash: String,
}

impl TrialResult {
    pub fn finite(&self) -> bool {
        self.rate_bits.is_finite()
            && self.opt_rate_bits.is_finite()
            && self.subspace_angle_rad.is_finite()
            && self.decomp_dist.is_finite()
            && self.bound_slack.map_or(true, f64::is_finite)
            && self.rate_waterfill_bits.map_or(true, f64::is_finite)
    }
}
