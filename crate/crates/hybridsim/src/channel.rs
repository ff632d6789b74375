//! Sparse mmWave channel realizations and AWGN draws.
//!
//! A realization is a sum of `L` scatterer paths, each an outer product of
//! uniform-linear-array responses at the receive and transmit sides with a
//! complex Gaussian gain. Rebuilding the matrix from the stored paths
//! reproduces it exactly, which is what makes JSON archives trustworthy.

use crate::linalg::{ComplexMatrix, C64};
use crate::{Error, Result};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// One scatterer: complex gain plus angle of arrival (MS side) and angle of
/// departure (BS side), both in radians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScattererPath {
    pub beta: Complex64,
    pub aoa: f64,
    pub aod: f64,
}

/// A channel matrix together with the scatterer parameters that generated it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// N×M channel (MS antennas × BS antennas).
    pub h: ComplexMatrix,
    pub paths: Vec<ScattererPath>,
    pub bs_antennas: usize,
    pub ms_antennas: usize,
}

/// Unit-norm ULA steering vector at half-wavelength spacing, phase referenced
/// to element 0: entry `k = exp(iπ·k·sin(angle))/√n`.
pub fn ula_response(angle: f64, n: usize) -> Vec<C64> {
    assert!(n >= 1);
    let scale = 1.0 / (n as f64).sqrt();
    let step = PI * angle.sin();
    (0..n)
        .map(|k| C64::from_polar(scale, step * k as f64))
        .collect()
}

fn assemble(bs_antennas: usize, ms_antennas: usize, paths: &[ScattererPath]) -> ComplexMatrix {
    let l = paths.len();
    let gain = ((bs_antennas * ms_antennas) as f64 / l as f64).sqrt();
    let mut h = ComplexMatrix::zeros(ms_antennas, bs_antennas);
    for p in paths {
        let ar = ula_response(p.aoa, ms_antennas);
        let at = ula_response(p.aod, bs_antennas);
        let coef = p.beta * gain;
        for i in 0..ms_antennas {
            let left = coef * ar[i];
            for j in 0..bs_antennas {
                h[(i, j)] += left * at[j].conj();
            }
        }
    }
    h
}

impl ChannelRealization {
    /// Rebuild from stored scatterer paths (the serialization inverse).
    pub fn from_paths(bs_antennas: usize, ms_antennas: usize, paths: Vec<ScattererPath>) -> Self {
        let h = assemble(bs_antennas, ms_antennas, &paths);
        Self {
            h,
            paths,
            bs_antennas,
            ms_antennas,
        }
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// `H q` (downlink direction).
    pub fn apply(&self, q: &[C64]) -> Vec<C64> {
        self.h.mul_vec(q)
    }

    /// `H† s` (uplink direction, reciprocity).
    pub fn apply_dagger(&self, s: &[C64]) -> Vec<C64> {
        self.h.dagger_mul_vec(s)
    }

    /// `H†H q` — the operator the BS-side estimator targets.
    pub fn gram_apply(&self, q: &[C64]) -> Vec<C64> {
        self.apply_dagger(&self.apply(q))
    }

    /// `HH† q` — mirrored operator for the MS side.
    pub fn cogram_apply(&self, q: &[C64]) -> Vec<C64> {
        self.apply(&self.apply_dagger(q))
    }

    /// Short hex digest of the paths; identical digests mean identical
    /// realizations, which is how sweep rows prove that every scheme saw the
    /// same channel.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update((self.bs_antennas as u64).to_le_bytes());
        hasher.update((self.ms_antennas as u64).to_le_bytes());
        hasher.update((self.paths.len() as u64).to_le_bytes());
        for p in &self.paths {
            hasher.update(p.beta.re.to_le_bytes());
            hasher.update(p.beta.im.to_le_bytes());
            hasher.update(p.aoa.to_le_bytes());
            hasher.update(p.aod.to_le_bytes());
        }
        let out = hasher.finalize();
        out[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Draw a random `L`-path realization. Per path the draw order is fixed:
/// gain (re, im), AoA, AoD.
pub fn sample_channel(
    bs_antennas: usize,
    ms_antennas: usize,
    num_paths: usize,
    rng: &mut impl Rng,
) -> ChannelRealization {
    assert!(num_paths >= 1);
    let paths: Vec<ScattererPath> = (0..num_paths)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let beta = Complex64::new(re / 2.0_f64.sqrt(), im / 2.0_f64.sqrt());
            let aoa = rng.gen_range(-PI / 2.0..=PI / 2.0);
            let aod = rng.gen_range(-PI / 2.0..=PI / 2.0);
            ScattererPath { beta, aoa, aod }
        })
        .collect();
    ChannelRealization::from_paths(bs_antennas, ms_antennas, paths)
}

/// Circularly-symmetric complex Gaussian vector; per-entry variance
/// `variance` (real and imaginary parts carry half each).
pub fn awgn(n: usize, variance: f64, rng: &mut impl Rng) -> Vec<C64> {
    assert!(variance >= 0.0);
    if variance == 0.0 {
        return vec![C64::new(0.0, 0.0); n];
    }
    let sigma = (variance / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * sigma, im * sigma)
        })
        .collect()
}

/// System dimensions and noise levels for a hybrid analog-digital link.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HybridConfig {
    /// BS antennas (M).
    pub bs_antennas: usize,
    /// MS antennas (N).
    pub ms_antennas: usize,
    /// RF chains at each end (r).
    pub rf_chains: usize,
    /// Data streams (d).
    pub streams: usize,
    /// Krylov depth (m).
    pub depth: usize,
    /// Linear SNR; the MS-side noise variance is its inverse.
    pub snr: f64,
    /// BS-side training noise variance.
    pub sigma_t_sq: f64,
    /// MS-side noise variance (`1/snr`).
    pub sigma_r_sq: f64,
    pub seed: u64,
    pub trials: usize,
}

impl HybridConfig {
    pub fn new(
        bs_antennas: usize,
        ms_antennas: usize,
        rf_chains: usize,
        streams: usize,
        depth: usize,
        snr: f64,
    ) -> Result<Self> {
        let cfg = Self {
            bs_antennas,
            ms_antennas,
            rf_chains,
            streams,
            depth,
            snr,
            sigma_t_sq: if snr > 0.0 { 1.0 / snr } else { 0.0 },
            sigma_r_sq: if snr > 0.0 { 1.0 / snr } else { 0.0 },
            seed: 0,
            trials: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same dimensions with all training noise switched off.
    pub fn noiseless(mut self) -> Self {
        self.sigma_t_sq = 0.0;
        self.sigma_r_sq = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, r, d) = (
            self.bs_antennas,
            self.ms_antennas,
            self.rf_chains,
            self.streams,
        );
        if d < 1 || r < d || r > m.min(n) {
            return Err(Error::Config(format!(
                "need streams <= rf_chains <= min(antennas): d={d}, r={r}, M={m}, N={n}"
            )));
        }
        if self.depth < 1 || self.depth > m {
            return Err(Error::Config(format!(
                "Krylov depth {} out of range 1..={m}",
                self.depth
            )));
        }
        if m % r != 0 || n % r != 0 {
            return Err(Error::Config(format!(
                "rf_chains must divide both antenna counts: M={m}, N={n}, r={r}"
            )));
        }
        if !(self.snr > 0.0) {
            return Err(Error::Config(format!("snr must be positive, got {}", self.snr)));
        }
        Ok(())
    }

    /// Downlink soundings per echo, `K_r = N/r`.
    pub fn k_r(&self) -> usize {
        self.ms_antennas / self.rf_chains
    }

    /// Uplink soundings per echo, `K_t = M/r`.
    pub fn k_t(&self) -> usize {
        self.bs_antennas / self.rf_chains
    }
}
