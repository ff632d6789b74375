//! The hybrid analog-digital link: echoing protocols and the two estimation
//! pipelines built on them.
//!
//! A base station cannot observe `H†H q` directly through an analog front
//! end: every reception is filtered by a constant-modulus combiner bank, and
//! every sounded vector must itself be expressible as an analog beam times a
//! scalar. The repetition-aided echo solves the first problem by repeating
//! each sounding over the column blocks of a DFT matrix (the blocks' outer
//! products sum to the identity, cancelling the combiner exactly) and the
//! second with the closed-form single-column decomposition, whose error is
//! recorded rather than ignored.

use crate::arnoldi::{
    arnoldi_build, random_unit_vector, ritz_extract, ArnoldiState, DistortionTranscript,
    MatvecOracle, SubspaceEstimate,
};
use crate::channel::{awgn, ChannelRealization, HybridConfig};
use crate::decomp::{bcd_sd, decompose_vector};
use crate::linalg::{dft_matrix, qr_factor, vec_norm2, vec_scale, vec_sub, ComplexMatrix, C64};
use crate::metrics::waterfill;
use crate::rng::{stream, StreamPurpose};
use crate::{Error, Result};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Everything observed during one echo of one sounded vector.
#[derive(Debug, Clone, Serialize)]
pub struct EchoRecord {
    /// The vector the initiating side wanted to sound.
    pub sounded: Vec<C64>,
    /// Decomposition error at the initiating side (`q − f̃g̃`).
    pub tx_error: Vec<C64>,
    /// Combined received vector at the echoing side, before normalization.
    pub combined_rx: Vec<C64>,
    /// Norm of `combined_rx`; the echoing side normalizes before
    /// decomposing so its transmission meets the unit power constraint, and
    /// the scale is undone at the end of the echo.
    pub echo_scale: f64,
    /// Decomposition error at the echoing side, in unnormalized units.
    pub echo_error: Vec<C64>,
    /// Returned estimate at the `d²`-amplified level.
    pub estimate: Vec<C64>,
    pub downlink_noise: Vec<Vec<C64>>,
    pub uplink_noise: Vec<Vec<C64>>,
    pub channel_uses: usize,
}

impl EchoRecord {
    fn strip_noise(&mut self) {
        self.downlink_noise.clear();
        self.uplink_noise.clear();
    }
}

/// Noise streams for one estimation run, split per purpose so extra draws in
/// one phase never shift another.
pub struct NoiseStreams {
    pub downlink: ChaCha8Rng,
    pub uplink: ChaCha8Rng,
}

impl NoiseStreams {
    pub fn for_trial(master: u64, trial: u64, snr_index: u64, ms_initiated: bool) -> Self {
        let (dl, ul) = if ms_initiated {
            (StreamPurpose::MsDownlinkNoise, StreamPurpose::MsUplinkNoise)
        } else {
            (StreamPurpose::DownlinkNoise, StreamPurpose::UplinkNoise)
        };
        Self {
            downlink: stream(master, trial, snr_index, dl),
            uplink: stream(master, trial, snr_index, ul),
        }
    }
}

/// Which end initiates the echo (and therefore which Gram operator the
/// estimate targets).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initiator {
    /// Estimates `H†H q`, `q` lives at the BS (dimension M).
    Bs,
    /// Estimates `HH† q`, `q` lives at the MS (dimension N).
    Ms,
}

/// Shared per-channel context: the combiner banks at both ends. The default
/// banks are full DFT matrices, whose partition blocks cancel the analog
/// processing exactly; truncated banks trade that cancellation for overhead
/// (experimental, no quality guarantee).
pub struct Echoer<'a> {
    pub channel: &'a ChannelRealization,
    pub config: &'a HybridConfig,
    bank_ms: ComplexMatrix,
    bank_bs: ComplexMatrix,
}

impl<'a> Echoer<'a> {
    pub fn new(channel: &'a ChannelRealization, config: &'a HybridConfig) -> Result<Self> {
        Self::with_banks(
            channel,
            config,
            dft_matrix(config.bs_antennas),
            dft_matrix(config.ms_antennas),
        )
    }

    /// Echo through explicit combiner banks. Column counts must be positive
    /// multiples of the RF chain count; entries must be constant modulus.
    pub fn with_banks(
        channel: &'a ChannelRealization,
        config: &'a HybridConfig,
        bank_bs: ComplexMatrix,
        bank_ms: ComplexMatrix,
    ) -> Result<Self> {
        config.validate()?;
        if channel.bs_antennas != config.bs_antennas || channel.ms_antennas != config.ms_antennas
        {
            return Err(Error::DimensionMismatch(
                "channel and config antenna counts differ".into(),
            ));
        }
        for (bank, rows, side) in [
            (&bank_bs, config.bs_antennas, "BS"),
            (&bank_ms, config.ms_antennas, "MS"),
        ] {
            if bank.rows() != rows
                || bank.cols() == 0
                || bank.cols() % config.rf_chains != 0
                || bank.cols() > rows
            {
                return Err(Error::DimensionMismatch(format!(
                    "{side} bank must be {rows}xK with K a positive multiple of r <= {rows}"
                )));
            }
            if !crate::decomp::is_constant_modulus(bank, 1e-9) {
                return Err(Error::Config(format!(
                    "{side} bank entries must be constant modulus"
                )));
            }
        }
        Ok(Self {
            channel,
            config,
            bank_ms,
            bank_bs,
        })
    }

    /// Soundings one hop costs: the number of `r`-column blocks in its bank.
    fn hop_blocks(&self, through_downlink: bool) -> usize {
        let bank = if through_downlink {
            &self.bank_ms
        } else {
            &self.bank_bs
        };
        bank.cols() / self.config.rf_chains
    }

    /// One hop: sound `x` repeatedly through consecutive `r`-column blocks of
    /// the bank, adding antenna-domain noise per sounding, and combine the
    /// digital samples back with the same blocks.
    fn hop(
        &self,
        x: &[C64],
        through_downlink: bool,
        noise_var: f64,
        rng: &mut ChaCha8Rng,
        noise_log: &mut Vec<Vec<C64>>,
    ) -> Vec<C64> {
        let r = self.config.rf_chains;
        let (bank, out_dim) = if through_downlink {
            (&self.bank_ms, self.config.ms_antennas)
        } else {
            (&self.bank_bs, self.config.bs_antennas)
        };
        let blocks = bank.cols() / r;
        let mut combined = vec![C64::new(0.0, 0.0); out_dim];
        for k in 0..blocks {
            let rx_clean = if through_downlink {
                self.channel.apply(x)
            } else {
                self.channel.apply_dagger(x)
            };
            let n = awgn(out_dim, noise_var, rng);
            let rx: Vec<C64> = rx_clean.iter().zip(&n).map(|(a, b)| a + b).collect();
            noise_log.push(n);
            let block = bank.col_block(k * r, (k + 1) * r);
            let digital = block.dagger_mul_vec(&rx);
            let back = block.mul_vec(&digital);
            for (c, b) in combined.iter_mut().zip(&back) {
                *c += b;
            }
        }
        combined
    }

    /// Full echo of `q` (norm at most 1). The initiating side decomposes `q`
    /// into an analog beam times a scalar and sounds it with a `d`-fold array
    /// gain; the echoing side combines, normalizes, decomposes, and sends it
    /// back the same way; the initiator combines again and undoes the
    /// normalization. The returned estimate approximates `d²·Gram·q` with the
    /// two decomposition errors recorded.
    pub fn echo(&self, q: &[C64], from: Initiator, noise: &mut NoiseStreams) -> EchoRecord {
        let d = self.config.streams as f64;
        debug_assert!(vec_norm2(q) <= 1.0 + 1e-9, "sounded vector exceeds unit power");

        let (f_tx, g_tx) = decompose_vector(q);
        let beam = vec_scale(&f_tx, C64::new(g_tx, 0.0));
        let tx_error = vec_sub(q, &beam);
        let amplified = vec_scale(&beam, C64::new(d, 0.0));

        let mut dl_noise = Vec::new();
        let mut ul_noise = Vec::new();
        let (s_tilde, uses_first) = match from {
            Initiator::Bs => (
                self.hop(
                    &amplified,
                    true,
                    self.config.sigma_r_sq,
                    &mut noise.downlink,
                    &mut dl_noise,
                ),
                self.hop_blocks(true),
            ),
            Initiator::Ms => (
                self.hop(
                    &amplified,
                    false,
                    self.config.sigma_t_sq,
                    &mut noise.uplink,
                    &mut ul_noise,
                ),
                self.hop_blocks(false),
            ),
        };

        let scale = vec_norm2(&s_tilde);
        let normalized = if scale > 0.0 {
            vec_scale(&s_tilde, C64::new(1.0 / scale, 0.0))
        } else {
            s_tilde.clone()
        };
        let (f_echo, g_echo) = decompose_vector(&normalized);
        let echo_beam = vec_scale(&f_echo, C64::new(g_echo, 0.0));
        let echo_error = vec_sub(
            &s_tilde,
            &vec_scale(&echo_beam, C64::new(scale, 0.0)),
        );
        let echo_amplified = vec_scale(&echo_beam, C64::new(d, 0.0));

        let (returned, uses_second) = match from {
            Initiator::Bs => (
                self.hop(
                    &echo_amplified,
                    false,
                    self.config.sigma_t_sq,
                    &mut noise.uplink,
                    &mut ul_noise,
                ),
                self.hop_blocks(false),
            ),
            Initiator::Ms => (
                self.hop(
                    &echo_amplified,
                    true,
                    self.config.sigma_r_sq,
                    &mut noise.downlink,
                    &mut dl_noise,
                ),
                self.hop_blocks(true),
            ),
        };
        let estimate = vec_scale(&returned, C64::new(scale, 0.0));

        EchoRecord {
            sounded: q.to_vec(),
            tx_error,
            combined_rx: s_tilde,
            echo_scale: scale,
            echo_error,
            estimate,
            downlink_noise: dl_noise,
            uplink_noise: ul_noise,
            channel_uses: uses_first + uses_second,
        }
    }
}

/// Single-bank echo without repetition: the sounded beam passes through one
/// fixed analog combiner on each side, so the combiner products do not cancel
/// and the estimate is distorted. Returns the `r`-dimensional digital
/// observation at the initiating side; kept as the demonstration of why the
/// repetition-aided protocol exists.
pub fn naive_echo(
    q: &[C64],
    channel: &ChannelRealization,
    analog_bs: &ComplexMatrix,
    analog_ms: &ComplexMatrix,
    sigma_t_sq: f64,
    sigma_r_sq: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<C64> {
    let (f_tx, g_tx) = decompose_vector(q);
    let beam = vec_scale(&f_tx, C64::new(g_tx, 0.0));

    let mut rx = channel.apply(&beam);
    let n_r = awgn(rx.len(), sigma_r_sq, rng);
    for (a, b) in rx.iter_mut().zip(&n_r) {
        *a += b;
    }
    let digital_ms = analog_ms.dagger_mul_vec(&rx);
    let echoed = analog_ms.mul_vec(&digital_ms);

    let mut back = channel.apply_dagger(&echoed);
    let n_t = awgn(back.len(), sigma_t_sq, rng);
    for (a, b) in back.iter_mut().zip(&n_t) {
        *a += b;
    }
    analog_bs.dagger_mul_vec(&back)
}

/// Matvec oracle backed by the repetition-aided echo: divides the `d²` array
/// gain back out and records the effective distortion against the true Gram
/// operator (simulation-side bookkeeping that enables the certificates).
pub struct RaidOracle<'a> {
    echoer: &'a Echoer<'a>,
    from: Initiator,
    noise: NoiseStreams,
    record_echoes: bool,
    pub transcript: DistortionTranscript,
    pub echoes: Vec<EchoRecord>,
    pub channel_uses: usize,
}

impl<'a> RaidOracle<'a> {
    pub fn new(
        echoer: &'a Echoer<'a>,
        from: Initiator,
        noise: NoiseStreams,
        record_echoes: bool,
    ) -> Self {
        let dim = match from {
            Initiator::Bs => echoer.config.bs_antennas,
            Initiator::Ms => echoer.config.ms_antennas,
        };
        Self {
            echoer,
            from,
            noise,
            record_echoes,
            transcript: DistortionTranscript::new(dim),
            echoes: Vec::new(),
            channel_uses: 0,
        }
    }
}

impl MatvecOracle for RaidOracle<'_> {
    fn apply(&mut self, q: &[C64]) -> Result<Vec<C64>> {
        let mut rec = self.echoer.echo(q, self.from, &mut self.noise);
        self.channel_uses += rec.channel_uses;
        let d2 = (self.echoer.config.streams * self.echoer.config.streams) as f64;
        let estimate = vec_scale(&rec.estimate, C64::new(1.0 / d2, 0.0));
        let pure = match self.from {
            Initiator::Bs => self.echoer.channel.gram_apply(q),
            Initiator::Ms => self.echoer.channel.cogram_apply(q),
        };
        let distortion = vec_sub(&estimate, &pure);
        self.transcript.push(
            distortion,
            Some(rec.tx_error.clone()),
            Some(rec.echo_error.clone()),
            vec![],
        );
        if self.record_echoes {
            self.echoes.push(rec);
        } else {
            rec.strip_noise();
        }
        Ok(estimate)
    }

    fn dim(&self) -> usize {
        self.transcript.dim
    }
}

/// Final precoders and combiners of one estimation pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct HybridPrecoderSet {
    /// Constant-modulus analog precoder (M×d).
    pub analog_precoder: ComplexMatrix,
    pub digital_precoder: ComplexMatrix,
    /// Constant-modulus analog combiner (N×d).
    pub analog_combiner: ComplexMatrix,
    pub digital_combiner: ComplexMatrix,
    /// Estimated singular values, descending.
    pub sigma_est: Vec<f64>,
    /// Waterfilled allocation over `sigma_est`; sums to `d`.
    pub power_alloc: Vec<f64>,
}

impl HybridPrecoderSet {
    pub fn validate(&self, streams: usize) -> Result<()> {
        if !crate::decomp::is_constant_modulus(&self.analog_precoder, 1e-12)
            || !crate::decomp::is_constant_modulus(&self.analog_combiner, 1e-12)
        {
            return Err(Error::Config("analog factor lost constant modulus".into()));
        }
        let power = self
            .analog_precoder
            .mul(&self.digital_precoder)
            .fro_norm_sq();
        if (power - streams as f64).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "effective precoder power {power} differs from {streams}"
            )));
        }
        Ok(())
    }
}

/// Scale the digital factor so the effective precoder power equals `power`.
pub fn scale_digital_to_power(
    analog: &ComplexMatrix,
    digital: &ComplexMatrix,
    power: f64,
) -> ComplexMatrix {
    let current = analog.mul(digital).fro_norm_sq();
    if current <= 0.0 {
        return digital.clone();
    }
    digital.scale_re((power / current).sqrt())
}

/// Iteration and recording knobs shared by the pipelines.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub bcd_max_iter: usize,
    pub bcd_tol: f64,
    pub record_echoes: bool,
    /// Experimental: echo through truncated `(BS, MS)` combiner banks instead
    /// of full DFT matrices. Cuts overhead proportionally but the analog
    /// processing no longer cancels.
    pub truncated_banks: Option<(ComplexMatrix, ComplexMatrix)>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            bcd_max_iter: 200,
            bcd_tol: 1e-8,
            record_echoes: false,
            truncated_banks: None,
        }
    }
}

fn build_echoer<'a>(
    channel: &'a ChannelRealization,
    config: &'a HybridConfig,
    opts: &PipelineOptions,
) -> Result<Echoer<'a>> {
    match &opts.truncated_banks {
        Some((bs, ms)) => Echoer::with_banks(channel, config, bs.clone(), ms.clone()),
        None => Echoer::new(channel, config),
    }
}

/// Complete output of one subspace-estimation-and-decomposition run.
#[derive(Debug, Clone, Serialize)]
pub struct SedRun {
    pub precoders: HybridPrecoderSet,
    pub gamma_estimate: SubspaceEstimate,
    pub phi_estimate: SubspaceEstimate,
    pub gamma_state: ArnoldiState,
    pub phi_state: ArnoldiState,
    pub precoder_objective: f64,
    pub combiner_objective: f64,
    pub channel_uses: usize,
    pub echoes: Vec<EchoRecord>,
    pub decomposition_flagged: bool,
}

/// Seeds for the two estimation directions.
pub struct SedSeeds {
    pub bs_noise: NoiseStreams,
    pub bs_init: ChaCha8Rng,
    pub ms_noise: NoiseStreams,
    pub ms_init: ChaCha8Rng,
}

impl SedSeeds {
    pub fn for_trial(master: u64, trial: u64, snr_index: u64) -> Self {
        Self {
            bs_noise: NoiseStreams::for_trial(master, trial, snr_index, false),
            bs_init: stream(master, trial, snr_index, StreamPurpose::InitVector),
            ms_noise: NoiseStreams::for_trial(master, trial, snr_index, true),
            ms_init: stream(master, trial, snr_index, StreamPurpose::MsInitVector),
        }
    }
}

/// Estimate both singular subspaces through the echoing protocol, decompose
/// them into hybrid factors, and waterfill over the estimated spectrum.
pub fn sed(
    channel: &ChannelRealization,
    config: &HybridConfig,
    seeds: SedSeeds,
    opts: &PipelineOptions,
) -> Result<SedRun> {
    let echoer = build_echoer(channel, config, opts)?;
    let d = config.streams;
    let SedSeeds {
        bs_noise,
        mut bs_init,
        ms_noise,
        mut ms_init,
    } = seeds;

    // BS-initiated pass: right singular subspace and the spectrum estimate
    let q1 = random_unit_vector(config.bs_antennas, &mut bs_init);
    let mut oracle = RaidOracle::new(&echoer, Initiator::Bs, bs_noise, opts.record_echoes);
    let gamma_state = arnoldi_build(&mut oracle, config.depth, &q1)?;
    let mut uses = oracle.channel_uses;
    let mut echoes = std::mem::take(&mut oracle.echoes);
    let gamma_estimate = ritz_extract(&gamma_state, d, oracle.transcript)?;

    // mirrored MS-initiated pass: left singular subspace
    let p1 = random_unit_vector(config.ms_antennas, &mut ms_init);
    let mut oracle = RaidOracle::new(&echoer, Initiator::Ms, ms_noise, opts.record_echoes);
    let phi_state = arnoldi_build(&mut oracle, config.depth, &p1)?;
    uses += oracle.channel_uses;
    echoes.extend(std::mem::take(&mut oracle.echoes));
    let phi_estimate = ritz_extract(&phi_state, d, oracle.transcript)?;

    let (f_pair, f_report) = bcd_sd(&gamma_estimate.basis, opts.bcd_max_iter, opts.bcd_tol)?;
    let (w_pair, w_report) = bcd_sd(&phi_estimate.basis, opts.bcd_max_iter, opts.bcd_tol)?;

    let digital_precoder =
        scale_digital_to_power(&f_pair.analog, &f_pair.digital, d as f64);
    let sigma_est = gamma_estimate.ritz_values.clone();
    let power_alloc = waterfill(&sigma_est, config.snr);

    Ok(SedRun {
        precoders: HybridPrecoderSet {
            analog_precoder: f_pair.analog,
            digital_precoder,
            analog_combiner: w_pair.analog,
            digital_combiner: w_pair.digital,
            sigma_est,
            power_alloc,
        },
        gamma_estimate,
        phi_estimate,
        gamma_state,
        phi_state,
        precoder_objective: f_pair.objective,
        combiner_objective: w_pair.objective,
        channel_uses: uses,
        echoes,
        decomposition_flagged: f_report.singular_update || w_report.singular_update,
    })
}

/// Output of the two-way iterative pipeline.
#[derive(Debug, Clone, Serialize)]
pub struct MtqrRun {
    pub precoders: HybridPrecoderSet,
    pub x_basis: ComplexMatrix,
    pub y_basis: ComplexMatrix,
    pub precoder_objective: f64,
    pub combiner_objective: f64,
    pub channel_uses: usize,
    pub restarts: usize,
    pub decomposition_flagged: bool,
}

/// Seeds for the iterative pipeline.
pub struct MtqrSeeds {
    pub noise: NoiseStreams,
    pub init: ChaCha8Rng,
}

impl MtqrSeeds {
    pub fn for_trial(master: u64, trial: u64, snr_index: u64) -> Self {
        Self {
            noise: NoiseStreams {
                downlink: stream(master, trial, snr_index, StreamPurpose::MtqrDownlinkNoise),
                uplink: stream(master, trial, snr_index, StreamPurpose::MtqrUplinkNoise),
            },
            init: stream(master, trial, snr_index, StreamPurpose::MtqrInit),
        }
    }
}

/// Iteration count that matches the echoing pipeline's channel-use budget.
pub fn matched_mtqr_iterations(config: &HybridConfig) -> usize {
    (2 * config.depth).div_ceil(config.streams).max(1)
}

fn decompose_columns(basis: &ComplexMatrix) -> ComplexMatrix {
    let cols: Vec<Vec<C64>> = (0..basis.cols())
        .map(|j| {
            let (f, g) = decompose_vector(&basis.col(j));
            vec_scale(&f, C64::new(g, 0.0))
        })
        .collect();
    ComplexMatrix::from_cols(&cols)
}

/// Two-way subspace iteration over the hybrid link: each basis is decomposed
/// column by column, sounded through the repetition-aided hop, recombined and
/// re-orthonormalized at the far end; after `iterations` round trips the two
/// bases are decomposed into the final hybrid factors.
pub fn mtqr(
    channel: &ChannelRealization,
    config: &HybridConfig,
    iterations: usize,
    seeds: MtqrSeeds,
    x_init: Option<ComplexMatrix>,
    opts: &PipelineOptions,
) -> Result<MtqrRun> {
    if iterations < 1 {
        return Err(Error::Config("need at least one iteration".into()));
    }
    let echoer = build_echoer(channel, config, opts)?;
    let d = config.streams;
    let dgain = d as f64;
    let MtqrSeeds { mut noise, mut init } = seeds;

    let mut x = match x_init {
        Some(x0) => {
            if x0.rows() != config.bs_antennas || x0.cols() != d {
                return Err(Error::DimensionMismatch("bad initial basis shape".into()));
            }
            x0
        }
        None => {
            let cols: Vec<Vec<C64>> = (0..d)
                .map(|_| random_unit_vector(config.bs_antennas, &mut init))
                .collect();
            crate::linalg::qr_orthonormal(&ComplexMatrix::from_cols(&cols))?
        }
    };
    let mut y = ComplexMatrix::zeros(config.ms_antennas, d);
    let mut uses = 0usize;
    let mut restarts = 0usize;
    let mut sigma_est = vec![0.0; d];

    for _ in 0..iterations {
        // downlink: sound the decomposed columns of X, QR at the MS
        let x_beams = decompose_columns(&x);
        let mut y_cols = Vec::with_capacity(d);
        for j in 0..d {
            let amplified = vec_scale(&x_beams.col(j), C64::new(dgain, 0.0));
            let mut log = Vec::new();
            let combined = echoer.hop(
                &amplified,
                true,
                config.sigma_r_sq,
                &mut noise.downlink,
                &mut log,
            );
            uses += config.k_r();
            y_cols.push(vec_scale(&combined, C64::new(1.0 / dgain, 0.0)));
        }
        let y_raw = ComplexMatrix::from_cols(&y_cols);
        match qr_factor(&y_raw) {
            Ok((q, r)) => {
                y = q;
                for (i, s) in sigma_est.iter_mut().enumerate() {
                    *s = r[(i, i)].norm();
                }
            }
            Err(Error::RankDeficient { .. }) => {
                restarts += 1;
                let cols: Vec<Vec<C64>> = (0..d)
                    .map(|_| random_unit_vector(config.ms_antennas, &mut init))
                    .collect();
                y = crate::linalg::qr_orthonormal(&ComplexMatrix::from_cols(&cols))?;
            }
            Err(e) => return Err(e),
        }

        // uplink: mirror with the decomposed columns of Y
        let y_beams = decompose_columns(&y);
        let mut x_cols = Vec::with_capacity(d);
        for j in 0..d {
            let amplified = vec_scale(&y_beams.col(j), C64::new(dgain, 0.0));
            let mut log = Vec::new();
            let combined = echoer.hop(
                &amplified,
                false,
                config.sigma_t_sq,
                &mut noise.uplink,
                &mut log,
            );
            uses += config.k_t();
            x_cols.push(vec_scale(&combined, C64::new(1.0 / dgain, 0.0)));
        }
        let x_raw = ComplexMatrix::from_cols(&x_cols);
        match qr_factor(&x_raw) {
            Ok((q, _)) => x = q,
            Err(Error::RankDeficient { .. }) => {
                restarts += 1;
                let cols: Vec<Vec<C64>> = (0..d)
                    .map(|_| random_unit_vector(config.bs_antennas, &mut init))
                    .collect();
                x = crate::linalg::qr_orthonormal(&ComplexMatrix::from_cols(&cols))?;
            }
            Err(e) => return Err(e),
        }
    }

    let (f_pair, f_report) = bcd_sd(&x, opts.bcd_max_iter, opts.bcd_tol)?;
    let (w_pair, w_report) = bcd_sd(&y, opts.bcd_max_iter, opts.bcd_tol)?;
    let digital_precoder = scale_digital_to_power(&f_pair.analog, &f_pair.digital, d as f64);
    let power_alloc = waterfill(&sigma_est, config.snr);

    Ok(MtqrRun {
        precoders: HybridPrecoderSet {
            analog_precoder: f_pair.analog,
            digital_precoder,
            analog_combiner: w_pair.analog,
            digital_combiner: w_pair.digital,
            sigma_est,
            power_alloc,
        },
        x_basis: x,
        y_basis: y,
        precoder_objective: f_pair.objective,
        combiner_objective: w_pair.objective,
        channel_uses: uses,
        restarts,
        decomposition_flagged: f_report.singular_update || w_report.singular_update,
    })
}

/// Estimation scheme whose training overhead is being accounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EchoScheme {
    Sed,
    Mtqr,
}

/// Training overhead in channel uses: `2m(M+N)/r` for the echoing pipeline,
/// `dI(M+N)/r` for the two-way iteration.
pub fn overhead(scheme: EchoScheme, config: &HybridConfig, iterations: Option<usize>) -> u64 {
    let per_echo = (config.bs_antennas + config.ms_antennas) / config.rf_chains;
    match scheme {
        EchoScheme::Sed => (2 * config.depth * per_echo) as u64,
        EchoScheme::Mtqr => {
            let iters = iterations.unwrap_or_else(|| matched_mtqr_iterations(config));
            (config.streams * iters * per_echo) as u64
        }
    }
}

/// Corollary-style eigenvalue perturbation ceiling for the echoing pipeline,
/// `m·‖H‖_F²·(3 + 1/(d·‖H‖_F))`; deliberately pessimistic.
pub fn echo_perturbation_ceiling(channel: &ChannelRealization, config: &HybridConfig) -> f64 {
    let h_fro = channel.h.fro_norm();
    let d = config.streams as f64;
    config.depth as f64 * h_fro * h_fro * (3.0 + 1.0 / (d * h_fro))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, ScattererPath};
    use crate::channel::ula_response;
    use crate::decomp::project_constant_modulus;
    use crate::linalg::test_support::random_matrix;
    use num_complex::Complex64;
    use rand::SeedableRng;

    fn noiseless_cfg(m: usize, n: usize, r: usize, d: usize, depth: usize) -> HybridConfig {
        HybridConfig::new(m, n, r, d, depth, 10.0).unwrap().noiseless()
    }

    fn test_noise(seed: u64) -> NoiseStreams {
        NoiseStreams {
            downlink: ChaCha8Rng::seed_from_u64(seed),
            uplink: ChaCha8Rng::seed_from_u64(seed + 1),
        }
    }

    #[test]
    fn echo_identity_holds_noiselessly() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let cfg = noiseless_cfg(16, 8, 4, 2, 4);
        let ch = sample_channel(16, 8, 3, &mut rng);
        let echoer = Echoer::new(&ch, &cfg).unwrap();
        let q = random_unit_vector(16, &mut rng);
        let rec = echoer.echo(&q, Initiator::Bs, &mut test_noise(7));

        let d = 2.0;
        let aq = ch.gram_apply(&q);
        let ae = ch.gram_apply(&rec.tx_error);
        let he = ch.apply_dagger(&rec.echo_error);
        let expected: Vec<C64> = (0..16)
            .map(|i| d * d * aq[i] - d * d * ae[i] - d * he[i])
            .collect();
        let diff = vec_norm2(&vec_sub(&rec.estimate, &expected));
        let scale = vec_norm2(&rec.estimate).max(1.0);
        assert!(diff <= 1e-9 * scale, "echo identity violated: {diff:.3e}");
        assert_eq!(rec.channel_uses, 2 + 4);
    }

    #[test]
    fn echo_exact_when_both_decompositions_are_error_free() {
        // rank-one broadside channel: every sounded and echoed vector is a
        // scaled array response, which the single-column decomposition
        // reproduces exactly
        let ch = ChannelRealization::from_paths(
            16,
            8,
            vec![ScattererPath {
                beta: Complex64::new(1.0, 0.0),
                aoa: 0.0,
                aod: 0.0,
            }],
        );
        let cfg = noiseless_cfg(16, 8, 4, 2, 2);
        let echoer = Echoer::new(&ch, &cfg).unwrap();
        let q = ula_response(0.0, 16);
        let rec = echoer.echo(&q, Initiator::Bs, &mut test_noise(3));
        assert!(vec_norm2(&rec.tx_error) < 1e-12);
        assert!(vec_norm2(&rec.echo_error) < 1e-9 * rec.echo_scale.max(1.0));

        let aq = ch.gram_apply(&q);
        let expected: Vec<C64> = aq.iter().map(|z| z * 4.0).collect();
        let diff = vec_norm2(&vec_sub(&rec.estimate, &expected));
        assert!(diff <= 1e-9 * vec_norm2(&expected));
    }

    #[test]
    fn ms_initiated_echo_mirrors() {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let cfg = noiseless_cfg(16, 8, 4, 2, 4);
        let ch = sample_channel(16, 8, 3, &mut rng);
        let echoer = Echoer::new(&ch, &cfg).unwrap();
        let q = random_unit_vector(8, &mut rng);
        let rec = echoer.echo(&q, Initiator::Ms, &mut test_noise(9));

        let d = 2.0;
        let aq = ch.cogram_apply(&q);
        let ae = ch.cogram_apply(&rec.tx_error);
        let he = ch.apply(&rec.echo_error);
        let expected: Vec<C64> = (0..8)
            .map(|i| d * d * aq[i] - d * d * ae[i] - d * he[i])
            .collect();
        let diff = vec_norm2(&vec_sub(&rec.estimate, &expected));
        assert!(diff <= 1e-9 * vec_norm2(&rec.estimate).max(1.0));
        assert_eq!(rec.channel_uses, 6);
    }

    #[test]
    fn scale_record_reconstructs_combined_rx() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let cfg = HybridConfig::new(16, 8, 4, 2, 4, 5.0).unwrap();
        let ch = sample_channel(16, 8, 3, &mut rng);
        let echoer = Echoer::new(&ch, &cfg).unwrap();
        let q = random_unit_vector(16, &mut rng);
        let rec = echoer.echo(&q, Initiator::Bs, &mut test_noise(11));
        // the record keeps the unnormalized vector itself; the recorded scale
        // is exactly its norm, so normalize-then-rescale is a relative
        // machine-precision round trip
        assert_eq!(rec.echo_scale, vec_norm2(&rec.combined_rx));
        let normalized = vec_scale(&rec.combined_rx, C64::new(1.0 / rec.echo_scale, 0.0));
        let rebuilt = vec_scale(&normalized, C64::new(rec.echo_scale, 0.0));
        let err = vec_norm2(&vec_sub(&rebuilt, &rec.combined_rx));
        assert!(err <= 1e-15 * rec.echo_scale);
    }

    #[test]
    fn naive_echo_is_biased_but_exact_in_the_unitary_edge_case() {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        // square system so dimensions of estimate and target agree
        let ch = sample_channel(8, 8, 3, &mut rng);
        let q = random_unit_vector(8, &mut rng);

        // random constant-modulus banks distort the echo
        let f_bank = project_constant_modulus(&random_matrix(8, 8, &mut rng));
        let w_bank = project_constant_modulus(&random_matrix(8, 8, &mut rng));
        let p = naive_echo(&q, &ch, &f_bank, &w_bank, 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        let (f_tx, g_tx) = decompose_vector(&q);
        let beam = vec_scale(&f_tx, C64::new(g_tx, 0.0));
        let target = ch.gram_apply(&beam);
        let rel = vec_norm2(&vec_sub(&p, &target)) / vec_norm2(&target);
        assert!(rel > 0.1, "distortion unexpectedly small: {rel}");

        // unitary constant-modulus banks: returned signal is exactly
        // F†·H†H·(q−e)
        let dft = dft_matrix(8);
        let p2 = naive_echo(&q, &ch, &dft, &dft, 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(2));
        let expected = dft.dagger_mul_vec(&target);
        let rel2 = vec_norm2(&vec_sub(&p2, &expected)) / vec_norm2(&expected);
        assert!(rel2 <= 1e-10, "unitary edge case off by {rel2:.3e}");
    }

    #[test]
    fn sed_reaches_optimum_noiselessly_at_full_depth_rank_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let d = 2;
        let cfg = noiseless_cfg(16, 8, 4, d, 16);
        let ch = sample_channel(16, 8, d, &mut rng);
        let run = sed(
            &ch,
            &cfg,
            SedSeeds::for_trial(33, 0, 0),
            &PipelineOptions::default(),
        )
        .unwrap();
        // estimation is exact here, so the digital-ideal rate hits the bound
        let id = ComplexMatrix::identity(d);
        let rate = crate::metrics::user_rate(
            &ch.h,
            &run.gamma_estimate.basis,
            &id,
            &run.phi_estimate.basis,
            &id,
            cfg.snr,
        )
        .unwrap();
        let opt = crate::metrics::optimal_rate(&ch.h, d, cfg.snr).unwrap();
        assert!((rate - opt).abs() <= 1e-6, "rate {rate} vs optimum {opt}");
        run.precoders.validate(d).unwrap();
    }

    #[test]
    fn sed_channel_uses_match_the_overhead_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(106);
        let cfg = HybridConfig::new(32, 16, 4, 2, 4, 8.0).unwrap();
        let ch = sample_channel(32, 16, 3, &mut rng);
        let run = sed(
            &ch,
            &cfg,
            SedSeeds::for_trial(5, 1, 0),
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(
            run.channel_uses as u64,
            overhead(EchoScheme::Sed, &cfg, None)
        );
    }

    #[test]
    fn overhead_matches_published_operating_points() {
        let cfg3 = HybridConfig::new(128, 64, 16, 1, 3, 1.0).unwrap();
        assert_eq!(overhead(EchoScheme::Sed, &cfg3, None), 72);
        let cfg6 = HybridConfig::new(128, 64, 16, 2, 6, 1.0).unwrap();
        assert_eq!(overhead(EchoScheme::Sed, &cfg6, None), 144);
        assert_eq!(overhead(EchoScheme::Mtqr, &cfg6, Some(6)), 144);
        assert_eq!(matched_mtqr_iterations(&cfg6), 6);
    }

    #[test]
    fn mtqr_converges_on_rank_d_channels_noiselessly() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let d = 2;
        let cfg = noiseless_cfg(16, 8, 4, d, 4);
        let ch = sample_channel(16, 8, d, &mut rng);
        let run = mtqr(
            &ch,
            &cfg,
            50,
            MtqrSeeds::for_trial(44, 0, 0),
            None,
            &PipelineOptions::default(),
        )
        .unwrap();
        let truth = crate::linalg::svd_thin(&ch.h, d).unwrap();
        let angle =
            crate::linalg::largest_principal_angle(&run.x_basis, &truth.right).unwrap();
        assert!(angle <= 1e-4, "angle {angle:.3e}");
        let angle_y =
            crate::linalg::largest_principal_angle(&run.y_basis, &truth.left).unwrap();
        assert!(angle_y <= 1e-4, "combiner-side angle {angle_y:.3e}");
        assert_eq!(run.channel_uses as u64, overhead(EchoScheme::Mtqr, &cfg, Some(50)));
    }

    #[test]
    fn mtqr_fixed_point_at_the_true_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(108);
        let d = 2;
        let cfg = noiseless_cfg(16, 8, 4, d, 4);
        let ch = sample_channel(16, 8, d, &mut rng);
        let truth = crate::linalg::svd_thin(&ch.h, d).unwrap();
        let run = mtqr(
            &ch,
            &cfg,
            1,
            MtqrSeeds::for_trial(45, 0, 0),
            Some(truth.right.clone()),
            &PipelineOptions::default(),
        )
        .unwrap();
        let angle =
            crate::linalg::largest_principal_angle(&run.x_basis, &truth.right).unwrap();
        assert!(angle <= 1e-6, "drifted by {angle:.3e}");
    }
}
