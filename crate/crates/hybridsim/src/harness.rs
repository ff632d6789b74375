//! Scenario presets, Monte Carlo orchestration, and CSV/JSON emission.
//!
//! Every trial derives its randomness from `(master seed, trial index,
//! SNR index, purpose)`, so a sweep produces byte-identical output no matter
//! how many worker threads execute it, and every scheme inside a trial sees
//! the same channel realization and the same noise sub-streams.

use crate::arnoldi::nearest_match_gaps;
use crate::channel::{sample_channel, ChannelRealization, HybridConfig};
use crate::decomp::{bcd_sd, columnwise_decompose, omp_decompose, ula_dictionary};
use crate::linalg::{eigvals_dense, principal_angles, svd_thin, ComplexMatrix, C64, SvdTriple};
use crate::link::{
    echo_perturbation_ceiling, matched_mtqr_iterations, mtqr, scale_digital_to_power, sed,
    MtqrSeeds, PipelineOptions, SedRun, SedSeeds,
};
use crate::metrics::{user_rate, TrialResult};
use crate::rng::channel_stream;
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Dictionary resolution for the matching-pursuit baseline.
pub const OMP_DICT_SIZE: usize = 256;

/// Schemes a sweep can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    Sed,
    Mtqr,
    Opt,
    OmpBaseline,
    Columnwise,
    OptimalDecomp,
    BcdSd,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Sed,
        Scheme::Mtqr,
        Scheme::Opt,
        Scheme::OmpBaseline,
        Scheme::Columnwise,
        Scheme::OptimalDecomp,
        Scheme::BcdSd,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Scheme::Sed => "SED",
            Scheme::Mtqr => "MTQR",
            Scheme::Opt => "OPT",
            Scheme::OmpBaseline => "OMP-baseline",
            Scheme::Columnwise => "columnwise",
            Scheme::OptimalDecomp => "optimal-decomp",
            Scheme::BcdSd => "BCD-SD",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .iter()
            .copied()
            .find(|scheme| scheme.token().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let valid: Vec<&str> = Scheme::ALL.iter().map(|s| s.token()).collect();
                Error::Config(format!("unknown scheme '{s}'; valid: {}", valid.join(", ")))
            })
    }
}

/// How much per-trial context to write next to the result table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TranscriptVerbosity {
    #[default]
    Off,
    /// Channel paths and result rows.
    Summary,
    /// Also the full estimation run: basis, projections, distortion columns,
    /// echo records.
    Full,
}

/// Link-level sweep dimensions.
#[derive(Debug, Clone, Serialize)]
pub struct LinkScenario {
    pub bs_antennas: usize,
    pub ms_antennas: usize,
    pub rf_chains: usize,
    pub streams: usize,
    pub paths: usize,
    pub depth: usize,
    /// Iterations for the two-way scheme; defaults to the overhead-matched
    /// count `⌈2m/d⌉`.
    pub mtqr_iterations: Option<usize>,
}

/// Decomposition-only sweep (random unitary targets, no channel).
#[derive(Debug, Clone, Serialize)]
pub struct DecompScenario {
    pub dim: usize,
    pub streams: usize,
    pub r_atoms: usize,
}

#[derive(Debug, Clone, Serialize)]
pub enum ScenarioKind {
    Link(LinkScenario),
    Decomposition(DecompScenario),
}

/// One runnable scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub label: String,
    pub kind: ScenarioKind,
    pub schemes: Vec<Scheme>,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub emit_waterfill: bool,
    pub transcripts: TranscriptVerbosity,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("need at least one SNR point".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("need at least one scheme".into()));
        }
        match &self.kind {
            ScenarioKind::Link(l) => {
                HybridConfig::new(
                    l.bs_antennas,
                    l.ms_antennas,
                    l.rf_chains,
                    l.streams,
                    l.depth,
                    1.0,
                )?;
                if l.paths == 0 {
                    return Err(Error::Config("need at least one path".into()));
                }
                if self.schemes.contains(&Scheme::BcdSd) {
                    return Err(Error::Config(
                        "BCD-SD rows only exist in decomposition sweeps".into(),
                    ));
                }
            }
            ScenarioKind::Decomposition(d) => {
                if d.streams == 0 || d.streams > d.dim {
                    return Err(Error::Config("bad decomposition stream count".into()));
                }
                if d.r_atoms == 0 || d.r_atoms > OMP_DICT_SIZE {
                    return Err(Error::Config("bad r_atoms".into()));
                }
                for s in &self.schemes {
                    if !matches!(s, Scheme::BcdSd | Scheme::OmpBaseline | Scheme::Columnwise) {
                        return Err(Error::Config(format!(
                            "scheme {s} needs a channel; decomposition sweeps support BCD-SD, OMP-baseline, columnwise"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 5] = ["fig3", "fig4", "fig5", "fig6", "fig7"];

fn snr_range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut v = lo;
    while v <= hi + 1e-9 {
        out.push(v);
        v += step;
    }
    out
}

/// Expand a preset name into its scenario list. Sweeps over a non-SNR
/// parameter become separate labelled scenarios (separate output files).
pub fn preset_scenarios(name: &str, seed: u64) -> Result<Vec<ScenarioConfig>> {
    let base = |label: String, kind: ScenarioKind, schemes: Vec<Scheme>, snr: Vec<f64>, trials| {
        ScenarioConfig {
            label,
            kind,
            schemes,
            snr_db: snr,
            trials,
            seed,
            emit_waterfill: false,
            transcripts: TranscriptVerbosity::Off,
        }
    };
    let scenarios = match name {
        "fig3" => (1..=4)
            .map(|d| {
                base(
                    format!("fig3_d{d}"),
                    ScenarioKind::Decomposition(DecompScenario {
                        dim: 64,
                        streams: d,
                        r_atoms: 10,
                    }),
                    vec![Scheme::BcdSd, Scheme::Columnwise, Scheme::OmpBaseline],
                    vec![0.0],
                    200,
                )
            })
            .collect(),
        "fig4" => vec![base(
            "fig4".into(),
            ScenarioKind::Link(LinkScenario {
                bs_antennas: 128,
                ms_antennas: 64,
                rf_chains: 16,
                streams: 2,
                paths: 3,
                depth: 6,
                mtqr_iterations: None,
            }),
            vec![Scheme::Sed, Scheme::Mtqr, Scheme::OptimalDecomp, Scheme::Opt],
            snr_range(-20.0, 20.0, 5.0),
            100,
        )],
        "fig5" => [2usize, 4, 6, 8]
            .iter()
            .map(|&paths| {
                base(
                    format!("fig5_L{paths}"),
                    ScenarioKind::Link(LinkScenario {
                        bs_antennas: 64,
                        ms_antennas: 32,
                        rf_chains: 8,
                        streams: 2,
                        paths,
                        depth: 6,
                        mtqr_iterations: None,
                    }),
                    vec![Scheme::Sed, Scheme::Mtqr, Scheme::Opt],
                    vec![-5.0],
                    100,
                )
            })
            .collect(),
        "fig6" => vec![base(
            "fig6".into(),
            ScenarioKind::Link(LinkScenario {
                bs_antennas: 64,
                ms_antennas: 32,
                rf_chains: 8,
                streams: 3,
                paths: 4,
                depth: 6,
                mtqr_iterations: None,
            }),
            vec![Scheme::Sed, Scheme::Mtqr],
            vec![-10.0, 0.0, 10.0, 20.0],
            100,
        )],
        "fig7" => [16usize, 32, 64, 128, 256]
            .iter()
            .map(|&m| {
                base(
                    format!("fig7_M{m}"),
                    ScenarioKind::Link(LinkScenario {
                        bs_antennas: m,
                        ms_antennas: m / 2,
                        rf_chains: m / 8,
                        streams: 2,
                        paths: 4,
                        depth: 6,
                        mtqr_iterations: None,
                    }),
                    vec![Scheme::Sed, Scheme::Opt],
                    vec![0.0],
                    100,
                )
            })
            .collect(),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; valid presets: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(scenarios)
}

/// Aggregate over the ok-status rows of one `(scheme, snr)` cell.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub snr_db: f64,
    pub n: usize,
    pub mean_rate_bits: f64,
    pub stderr_rate_bits: f64,
    pub mean_opt_rate_bits: f64,
    pub mean_subspace_angle_rad: f64,
    pub mean_decomp_dist: f64,
}

/// Per-trial context dump written when transcripts are enabled.
#[derive(Debug, Clone)]
pub struct TranscriptBlob {
    pub file_name: String,
    pub json: String,
}

/// Result table of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub label: String,
    pub rows: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
    pub transcripts: Vec<TranscriptBlob>,
}

/// Trial dispatch strategy. The parallel path needs the `parallel` feature;
/// output is identical either way because all randomness is positional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
    #[cfg(feature = "parallel")]
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
}

// ---- per-trial execution ----

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

fn digest_matrix(m: &ComplexMatrix) -> String {
    use sha2::{Digest, Sha256};
    let mut hasher = Sha256::new();
    hasher.update((m.rows() as u64).to_le_bytes());
    hasher.update((m.cols() as u64).to_le_bytes());
    for z in m.entries() {
        hasher.update(z.re.to_le_bytes());
        hasher.update(z.im.to_le_bytes());
    }
    let out = hasher.finalize();
    out[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn blank_row(scheme: Scheme, snr_db: f64, trial: u64, hash: &str) -> TrialResult {
    TrialResult {
        scheme: scheme.token().to_string(),
        snr_db,
        trial,
        rate_bits: 0.0,
        opt_rate_bits: 0.0,
        subspace_angle_rad: 0.0,
        subspace_angle_mean_rad: 0.0,
        decomp_dist: 0.0,
        overhead_uses: 0,
        bound_slack: None,
        rate_waterfill_bits: None,
        status: "ok".into(),
        channel_hash: hash.to_string(),
    }
}

struct LinkSchemeCtx<'a> {
    scenario: &'a LinkScenario,
    channel: &'a ChannelRealization,
    truth: &'a SvdTriple,
    /// `H†H`, formed once per trial for the certificate columns.
    gram: Option<&'a ComplexMatrix>,
    dict_bs: Option<&'a ComplexMatrix>,
    dict_ms: Option<&'a ComplexMatrix>,
    hybrid: &'a HybridConfig,
    snr: f64,
    emit_waterfill: bool,
}

fn angles_against_truth(ctx: &LinkSchemeCtx, estimate: &ComplexMatrix) -> Result<(f64, f64)> {
    let angles = principal_angles(&ctx.truth.right, estimate)?;
    let largest = *angles.last().unwrap();
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    Ok((largest, mean))
}

fn waterfilled_rate(
    ctx: &LinkSchemeCtx,
    f: &ComplexMatrix,
    g: &ComplexMatrix,
    w: &ComplexMatrix,
    u: &ComplexMatrix,
    alloc: &[f64],
) -> Result<f64> {
    let weights: Vec<C64> = alloc.iter().map(|&p| C64::new(p.sqrt(), 0.0)).collect();
    let g_weighted = g.mul(&ComplexMatrix::diag(&weights));
    let g_scaled = scale_digital_to_power(f, &g_weighted, ctx.scenario.streams as f64);
    user_rate(&ctx.channel.h, f, &g_scaled, w, u, ctx.snr)
}

fn sed_bound_slack(ctx: &LinkSchemeCtx, run: &SedRun) -> Result<f64> {
    let gram = ctx
        .gram
        .expect("gram matrix is built whenever the echoing scheme runs");
    let noisy = eigvals_dense(&run.gamma_state.square_hess())?;
    let projected = crate::arnoldi::projected_operator(
        &run.gamma_state,
        &run.gamma_estimate.transcript,
        gram,
    )?;
    let pure = eigvals_dense(&projected)?;
    let max_gap = nearest_match_gaps(&noisy, &pure)
        .into_iter()
        .fold(0.0_f64, f64::max);
    Ok(echo_perturbation_ceiling(ctx.channel, ctx.hybrid) - max_gap)
}

fn run_sed_family(
    ctx: &LinkSchemeCtx,
    run: &SedRun,
    scheme: Scheme,
    row: &mut TrialResult,
) -> Result<()> {
    let d = ctx.scenario.streams;
    let (largest, mean) = angles_against_truth(ctx, &run.gamma_estimate.basis)?;
    row.subspace_angle_rad = largest;
    row.subspace_angle_mean_rad = mean;
    row.overhead_uses = run.channel_uses as u64;

    match scheme {
        Scheme::Sed => {
            let p = &run.precoders;
            row.rate_bits = user_rate(
                &ctx.channel.h,
                &p.analog_precoder,
                &p.digital_precoder,
                &p.analog_combiner,
                &p.digital_combiner,
                ctx.snr,
            )?;
            row.decomp_dist = run.precoder_objective;
            row.bound_slack = Some(sed_bound_slack(ctx, run)?);
            if ctx.emit_waterfill {
                row.rate_waterfill_bits = Some(waterfilled_rate(
                    ctx,
                    &p.analog_precoder,
                    &p.digital_precoder,
                    &p.analog_combiner,
                    &p.digital_combiner,
                    &p.power_alloc,
                )?);
            }
            if run.decomposition_flagged {
                row.status = "singular-update".into();
            }
        }
        Scheme::OptimalDecomp => {
            // unconstrained factorization oracle: the digital stage absorbs
            // the whole estimate
            let id = ComplexMatrix::identity(d);
            row.rate_bits = user_rate(
                &ctx.channel.h,
                &run.gamma_estimate.basis,
                &id,
                &run.phi_estimate.basis,
                &id,
                ctx.snr,
            )?;
            row.decomp_dist = 0.0;
        }
        Scheme::Columnwise => {
            let f_pair = columnwise_decompose(&run.gamma_estimate.basis);
            let w_pair = columnwise_decompose(&run.phi_estimate.basis);
            let g = scale_digital_to_power(&f_pair.analog, &f_pair.digital, d as f64);
            row.rate_bits = user_rate(
                &ctx.channel.h,
                &f_pair.analog,
                &g,
                &w_pair.analog,
                &w_pair.digital,
                ctx.snr,
            )?;
            row.decomp_dist = f_pair.objective;
        }
        Scheme::OmpBaseline => {
            let dict_bs = ctx.dict_bs.expect("BS dictionary built for OMP runs");
            let dict_ms = ctx.dict_ms.expect("MS dictionary built for OMP runs");
            let atoms = ctx.scenario.rf_chains;
            let f_pair = omp_decompose(&run.gamma_estimate.basis, dict_bs, atoms)?;
            let w_pair = omp_decompose(&run.phi_estimate.basis, dict_ms, atoms)?;
            let g = scale_digital_to_power(&f_pair.analog, &f_pair.digital, d as f64);
            row.rate_bits = user_rate(
                &ctx.channel.h,
                &f_pair.analog,
                &g,
                &w_pair.analog,
                &w_pair.digital,
                ctx.snr,
            )?;
            row.decomp_dist = f_pair.objective;
        }
        _ => unreachable!("not an estimation-sharing scheme"),
    }
    Ok(())
}

fn run_link_trial(
    scenario: &LinkScenario,
    cfg: &ScenarioConfig,
    trial: u64,
) -> (Vec<TrialResult>, Vec<TranscriptBlob>) {
    let mut rows = Vec::new();
    let mut blobs = Vec::new();

    let mut ch_rng = channel_stream(cfg.seed, trial);
    let channel = sample_channel(
        scenario.bs_antennas,
        scenario.ms_antennas,
        scenario.paths,
        &mut ch_rng,
    );
    let hash = channel.digest();
    let truth = match svd_thin(&channel.h, scenario.streams) {
        Ok(t) => t,
        Err(e) => {
            for (snr_idx, &snr_db) in cfg.snr_db.iter().enumerate() {
                let _ = snr_idx;
                for &scheme in &cfg.schemes {
                    let mut row = blank_row(scheme, snr_db, trial, &hash);
                    row.status = format!("error: {e}");
                    rows.push(row);
                }
            }
            return (rows, blobs);
        }
    };

    let needs_sed_family = cfg.schemes.iter().any(|s| {
        matches!(
            s,
            Scheme::Sed | Scheme::OptimalDecomp | Scheme::Columnwise | Scheme::OmpBaseline
        )
    });
    let gram = if cfg.schemes.contains(&Scheme::Sed) {
        Some(channel.h.dagger().mul(&channel.h))
    } else {
        None
    };
    let dicts = if cfg.schemes.contains(&Scheme::OmpBaseline) {
        Some((
            ula_dictionary(scenario.bs_antennas, OMP_DICT_SIZE),
            ula_dictionary(scenario.ms_antennas, OMP_DICT_SIZE),
        ))
    } else {
        None
    };

    for (snr_idx, &snr_db) in cfg.snr_db.iter().enumerate() {
        let snr = 10f64.powf(snr_db / 10.0);
        let hybrid = HybridConfig::new(
            scenario.bs_antennas,
            scenario.ms_antennas,
            scenario.rf_chains,
            scenario.streams,
            scenario.depth,
            snr,
        )
        .expect("scenario validated at load time");

        let ctx = LinkSchemeCtx {
            scenario,
            channel: &channel,
            truth: &truth,
            gram: gram.as_ref(),
            dict_bs: dicts.as_ref().map(|d| &d.0),
            dict_ms: dicts.as_ref().map(|d| &d.1),
            hybrid: &hybrid,
            snr,
            emit_waterfill: cfg.emit_waterfill,
        };

        let opt_rate: f64 = truth
            .singulars
            .iter()
            .map(|s| (1.0 + snr * s * s).log2())
            .sum();

        let pipeline_opts = PipelineOptions {
            record_echoes: cfg.transcripts == TranscriptVerbosity::Full,
            ..Default::default()
        };
        let sed_run = if needs_sed_family {
            Some(sed(
                &channel,
                &hybrid,
                SedSeeds::for_trial(cfg.seed, trial, snr_idx as u64),
                &pipeline_opts,
            ))
        } else {
            None
        };

        let mut snr_rows: Vec<TrialResult> = Vec::with_capacity(cfg.schemes.len());
        for &scheme in &cfg.schemes {
            let mut row = blank_row(scheme, snr_db, trial, &hash);
            row.opt_rate_bits = opt_rate;
            let outcome: Result<()> = match scheme {
                Scheme::Opt => {
                    row.rate_bits = opt_rate;
                    if cfg.emit_waterfill {
                        let alloc = crate::metrics::waterfill(&truth.singulars, snr);
                        row.rate_waterfill_bits = Some(
                            truth
                                .singulars
                                .iter()
                                .zip(&alloc)
                                .map(|(s, p)| (1.0 + snr * s * s * p).log2())
                                .sum(),
                        );
                    }
                    Ok(())
                }
                Scheme::Mtqr => {
                    let iterations = scenario
                        .mtqr_iterations
                        .unwrap_or_else(|| matched_mtqr_iterations(&hybrid));
                    mtqr(
                        &channel,
                        &hybrid,
                        iterations,
                        MtqrSeeds::for_trial(cfg.seed, trial, snr_idx as u64),
                        None,
                        &pipeline_opts,
                    )
                    .and_then(|run| {
                        let p = &run.precoders;
                        row.rate_bits = user_rate(
                            &channel.h,
                            &p.analog_precoder,
                            &p.digital_precoder,
                            &p.analog_combiner,
                            &p.digital_combiner,
                            snr,
                        )?;
                        let (largest, mean) = angles_against_truth(&ctx, &run.x_basis)?;
                        row.subspace_angle_rad = largest;
                        row.subspace_angle_mean_rad = mean;
                        row.decomp_dist = run.precoder_objective;
                        row.overhead_uses = run.channel_uses as u64;
                        if run.restarts > 0 {
                            row.status = "rank-deficient-restart".into();
                        }
                        if cfg.emit_waterfill {
                            row.rate_waterfill_bits = Some(waterfilled_rate(
                                &ctx,
                                &p.analog_precoder,
                                &p.digital_precoder,
                                &p.analog_combiner,
                                &p.digital_combiner,
                                &p.power_alloc,
                            )?);
                        }
                        Ok(())
                    })
                }
                _ => match sed_run.as_ref().expect("estimation run present") {
                    Ok(run) => run_sed_family(&ctx, run, scheme, &mut row),
                    Err(e) => Err(Error::Config(format!("estimation failed: {e}"))),
                },
            };
            if let Err(e) = outcome {
                row.status = format!("error: {e}");
            }
            snr_rows.push(row);
        }

        if cfg.transcripts != TranscriptVerbosity::Off {
            #[derive(Serialize)]
            struct TrialTranscript<'a> {
                trial: u64,
                snr_db: f64,
                seed: u64,
                channel: &'a ChannelRealization,
                results: &'a [TrialResult],
                #[serde(skip_serializing_if = "Option::is_none")]
                estimation: Option<&'a SedRun>,
            }
            let estimation = match (&sed_run, cfg.transcripts) {
                (Some(Ok(run)), TranscriptVerbosity::Full) => Some(run),
                _ => None,
            };
            let doc = TrialTranscript {
                trial,
                snr_db,
                seed: cfg.seed,
                channel: &channel,
                results: &snr_rows,
                estimation,
            };
            if let Ok(json) = serde_json::to_string(&doc) {
                blobs.push(TranscriptBlob {
                    file_name: format!("transcript_s{snr_idx}_t{trial}.json"),
                    json,
                });
            }
        }
        rows.extend(snr_rows);
    }
    (rows, blobs)
}

fn run_decomp_trial(
    scenario: &DecompScenario,
    cfg: &ScenarioConfig,
    dict: &ComplexMatrix,
    trial: u64,
) -> (Vec<TrialResult>, Vec<TranscriptBlob>) {
    let mut rng = channel_stream(cfg.seed, trial);
    let raw = gaussian_matrix(scenario.dim, scenario.streams, &mut rng);
    let target = match crate::linalg::qr_orthonormal(&raw) {
        Ok(q) => q,
        Err(_) => {
            // astronomically unlikely; draw again from the same stream
            crate::linalg::qr_orthonormal(&gaussian_matrix(
                scenario.dim,
                scenario.streams,
                &mut rng,
            ))
            .expect("second Gaussian draw is full rank")
        }
    };
    let hash = digest_matrix(&target);

    let mut rows = Vec::new();
    for &scheme in &cfg.schemes {
        let mut row = blank_row(scheme, cfg.snr_db[0], trial, &hash);
        let pair = match scheme {
            Scheme::BcdSd => bcd_sd(&target, 200, 1e-8).map(|(pair, report)| {
                if report.singular_update {
                    row.status = "singular-update".into();
                }
                pair
            }),
            Scheme::Columnwise => Ok(columnwise_decompose(&target)),
            Scheme::OmpBaseline => omp_decompose(&target, dict, scenario.r_atoms),
            _ => unreachable!("validated at load time"),
        };
        match pair {
            Ok(pair) => {
                row.decomp_dist = pair.objective;
                let product = pair.analog.mul(&pair.digital);
                match principal_angles(&target, &product) {
                    Ok(angles) => {
                        row.subspace_angle_rad = *angles.last().unwrap();
                        row.subspace_angle_mean_rad =
                            angles.iter().sum::<f64>() / angles.len() as f64;
                    }
                    Err(_) => {
                        row.subspace_angle_rad = std::f64::consts::FRAC_PI_2;
                        row.subspace_angle_mean_rad = std::f64::consts::FRAC_PI_2;
                        row.status = "rank-deficient-product".into();
                    }
                }
            }
            Err(e) => row.status = format!("error: {e}"),
        }
        rows.push(row);
    }
    (rows, Vec::new())
}

// ---- scenario driver ----

fn summarize(cfg: &ScenarioConfig, rows: &[TrialResult]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &snr_db in &cfg.snr_db {
        for &scheme in &cfg.schemes {
            let cell: Vec<&TrialResult> = rows
                .iter()
                .filter(|r| {
                    r.snr_db == snr_db && r.scheme == scheme.token() && !r.status.starts_with("error")
                })
                .collect();
            let n = cell.len();
            if n == 0 {
                out.push(SummaryRow {
                    scheme: scheme.token().into(),
                    snr_db,
                    n: 0,
                    mean_rate_bits: 0.0,
                    stderr_rate_bits: 0.0,
                    mean_opt_rate_bits: 0.0,
                    mean_subspace_angle_rad: 0.0,
                    mean_decomp_dist: 0.0,
                });
                continue;
            }
            let mean = |f: &dyn Fn(&TrialResult) -> f64| -> f64 {
                cell.iter().map(|r| f(r)).sum::<f64>() / n as f64
            };
            let mean_rate = mean(&|r| r.rate_bits);
            let var = if n > 1 {
                cell.iter()
                    .map(|r| (r.rate_bits - mean_rate).powi(2))
                    .sum::<f64>()
                    / (n - 1) as f64
            } else {
                0.0
            };
            out.push(SummaryRow {
                scheme: scheme.token().into(),
                snr_db,
                n,
                mean_rate_bits: mean_rate,
                stderr_rate_bits: (var / n as f64).sqrt(),
                mean_opt_rate_bits: mean(&|r| r.opt_rate_bits),
                mean_subspace_angle_rad: mean(&|r| r.subspace_angle_rad),
                mean_decomp_dist: mean(&|r| r.decomp_dist),
            });
        }
    }
    out
}

fn scheme_index(cfg: &ScenarioConfig, token: &str) -> usize {
    cfg.schemes
        .iter()
        .position(|s| s.token() == token)
        .unwrap_or(usize::MAX)
}

/// Run one scenario with the default execution mode (parallel when the
/// feature is compiled in).
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    run_scenario_with_mode(cfg, ExecMode::default())
}

/// Run one scenario, dispatching trials sequentially or over the rayon pool.
/// Rows come back in deterministic `(snr, trial, scheme)` order regardless of
/// completion order.
pub fn run_scenario_with_mode(cfg: &ScenarioConfig, mode: ExecMode) -> Result<ScenarioOutcome> {
    cfg.validate()?;

    let trial_fn = |trial: u64| -> (Vec<TrialResult>, Vec<TranscriptBlob>) {
        match &cfg.kind {
            ScenarioKind::Link(l) => run_link_trial(l, cfg, trial),
            ScenarioKind::Decomposition(d) => {
                let dict = ula_dictionary(d.dim, OMP_DICT_SIZE);
                run_decomp_trial(d, cfg, &dict, trial)
            }
        }
    };

    let per_trial: Vec<(Vec<TrialResult>, Vec<TranscriptBlob>)> = match mode {
        ExecMode::Sequential => (0..cfg.trials as u64).map(trial_fn).collect(),
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => (0..cfg.trials as u64)
            .into_par_iter()
            .map(trial_fn)
            .collect(),
    };

    let mut rows: Vec<TrialResult> = Vec::with_capacity(cfg.trials * cfg.schemes.len());
    let mut transcripts = Vec::new();
    for (trial_rows, blobs) in per_trial {
        rows.extend(trial_rows);
        transcripts.extend(blobs);
    }
    rows.sort_by(|a, b| {
        a.snr_db
            .total_cmp(&b.snr_db)
            .then(a.trial.cmp(&b.trial))
            .then(scheme_index(cfg, &a.scheme).cmp(&scheme_index(cfg, &b.scheme)))
    });
    transcripts.sort_by(|a, b| a.file_name.cmp(&b.file_name));

    let summary = summarize(cfg, &rows);
    Ok(ScenarioOutcome {
        label: cfg.label.clone(),
        rows,
        summary,
        transcripts,
    })
}

// ---- emission ----

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Fixed column set; the waterfill column is appended only on request.
pub fn rows_to_csv(rows: &[TrialResult], emit_waterfill: bool) -> String {
    let mut out = String::from(
        "scheme,snr_db,trial,rate_bits,opt_rate_bits,subspace_angle_rad,decomp_dist,overhead_uses,bound_slack,status,channel_hash",
    );
    if emit_waterfill {
        out.push_str(",rate_waterfill_bits");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.scheme,
            fmt_f64(r.snr_db),
            r.trial,
            fmt_f64(r.rate_bits),
            fmt_f64(r.opt_rate_bits),
            fmt_f64(r.subspace_angle_rad),
            fmt_f64(r.decomp_dist),
            r.overhead_uses,
            r.bound_slack.map(fmt_f64).unwrap_or_default(),
            r.status,
            r.channel_hash,
        ));
        if emit_waterfill {
            out.push(',');
            out.push_str(&r.rate_waterfill_bits.map(fmt_f64).unwrap_or_default());
        }
        out.push('\n');
    }
    out
}

pub fn summary_to_csv(summary: &[SummaryRow]) -> String {
    let mut out = String::from(
        "scheme,snr_db,n,mean_rate_bits,stderr_rate_bits,mean_opt_rate_bits,mean_subspace_angle_rad,mean_decomp_dist\n",
    );
    for s in summary {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.scheme,
            fmt_f64(s.snr_db),
            s.n,
            fmt_f64(s.mean_rate_bits),
            fmt_f64(s.stderr_rate_bits),
            fmt_f64(s.mean_opt_rate_bits),
            fmt_f64(s.mean_subspace_angle_rad),
            fmt_f64(s.mean_decomp_dist),
        ));
    }
    out
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    label: &'a str,
    seed: u64,
    trials: usize,
    rows: &'a [TrialResult],
    summary: &'a [SummaryRow],
}

pub fn outcome_to_json(cfg: &ScenarioConfig, outcome: &ScenarioOutcome) -> Result<String> {
    Ok(serde_json::to_string_pretty(&JsonDocument {
        label: &outcome.label,
        seed: cfg.seed,
        trials: cfg.trials,
        rows: &outcome.rows,
        summary: &outcome.summary,
    })?)
}

/// `run.csv` → `run.summary.csv`
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}.summary.csv"))
}

/// `run.csv` → `run_transcripts/`
pub fn transcript_dir(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    out.with_file_name(format!("{stem}_transcripts"))
}

/// Output format of the result table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Write one scenario outcome: table (+ summary file for CSV) and optional
/// transcript directory.
pub fn write_outcome(
    cfg: &ScenarioConfig,
    outcome: &ScenarioOutcome,
    out: &Path,
    format: OutputFormat,
) -> Result<()> {
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    match format {
        OutputFormat::Csv => {
            std::fs::write(out, rows_to_csv(&outcome.rows, cfg.emit_waterfill))?;
            std::fs::write(summary_path(out), summary_to_csv(&outcome.summary))?;
        }
        OutputFormat::Json => {
            std::fs::write(out, outcome_to_json(cfg, outcome)?)?;
        }
    }
    if !outcome.transcripts.is_empty() {
        let dir = transcript_dir(out);
        std::fs::create_dir_all(&dir)?;
        for blob in &outcome.transcripts {
            std::fs::write(dir.join(&blob.file_name), &blob.json)?;
        }
    }
    Ok(())
}
