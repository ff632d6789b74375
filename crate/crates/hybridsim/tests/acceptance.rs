//! Acceptance suite: exactness certificates, desk-scale figure-level
//! reproductions, noise-free convergence, and byte-level determinism.
//!
//! Each test prints one `[PASS]` line (visible with `--nocapture`); run the
//! whole gate with `cargo test --test acceptance`.

use hybridsim::arnoldi::{
    arnoldi_build, eig_perturbation_bound, nearest_match_gaps, projected_operator,
    random_unit_vector, residual_certificate, ritz_extract, DistortedOracle, DistortionTranscript,
    ExactOracle,
};
use hybridsim::channel::{sample_channel, HybridConfig};
use hybridsim::decomp::{
    bcd_sd, columnwise_decompose, decompose_vector, is_constant_modulus, omp_decompose,
    project_constant_modulus, ula_dictionary,
};
use hybridsim::harness::{
    preset_scenarios, rows_to_csv, run_scenario, LinkScenario, ScenarioConfig, ScenarioKind,
    Scheme, TranscriptVerbosity,
};
use hybridsim::linalg::{
    dft_matrix, eigvals_dense, principal_angles, qr_orthonormal, svd_thin, vec_norm2,
    vec_one_norm, vec_sub, ComplexMatrix, C64,
};
use hybridsim::link::{
    echo_perturbation_ceiling, overhead, sed, EchoScheme, Echoer, Initiator, NoiseStreams,
    PipelineOptions, SedSeeds,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::time::Instant;

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

fn random_unitary(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    qr_orthonormal(&gaussian_matrix(rows, cols, rng)).unwrap()
}

// ---- 1. exactness certificates ----

#[test]
fn noiseless_echo_identity_over_dimension_sweep() {
    let start = Instant::now();
    let dims = [(16usize, 8usize, 4usize), (32, 16, 4), (64, 32, 8)];
    let d = 2;
    let echoes_per_dim = 334; // just over 1000 echoes total
    let mut checked = 0usize;
    for (idx, &(m, n, r)) in dims.iter().enumerate() {
        let cfg = HybridConfig::new(m, n, r, d, 2, 10.0).unwrap().noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + idx as u64);
        for echo_idx in 0..echoes_per_dim {
            let channel = sample_channel(m, n, 3, &mut rng);
            let echoer = Echoer::new(&channel, &cfg).unwrap();
            // alternate initiating side
            let from = if echo_idx % 2 == 0 {
                Initiator::Bs
            } else {
                Initiator::Ms
            };
            let dim = match from {
                Initiator::Bs => m,
                Initiator::Ms => n,
            };
            let q = random_unit_vector(dim, &mut rng);
            let mut noise = NoiseStreams {
                downlink: ChaCha8Rng::seed_from_u64(1),
                uplink: ChaCha8Rng::seed_from_u64(2),
            };
            let rec = echoer.echo(&q, from, &mut noise);

            let df = d as f64;
            let (gram_q, gram_e, cross) = match from {
                Initiator::Bs => (
                    channel.gram_apply(&q),
                    channel.gram_apply(&rec.tx_error),
                    channel.apply_dagger(&rec.echo_error),
                ),
                Initiator::Ms => (
                    channel.cogram_apply(&q),
                    channel.cogram_apply(&rec.tx_error),
                    channel.apply(&rec.echo_error),
                ),
            };
            let expected: Vec<C64> = (0..dim)
                .map(|i| df * df * gram_q[i] - df * df * gram_e[i] - df * cross[i])
                .collect();
            let err = vec_norm2(&vec_sub(&rec.estimate, &expected));
            let scale = vec_norm2(&rec.estimate).max(1.0);
            assert!(
                err <= 1e-9 * scale,
                "echo identity violated at dims ({m},{n},{r}) echo {echo_idx}: {err:.3e}"
            );
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "echo identity sweep took {elapsed:?}, budget 30 s"
    );
    println!(
        "[PASS] noiseless echo identity: {checked} echoes across 3 dimension sets, \
         max tolerance 1e-9 relative, {elapsed:.2?}"
    );
}

#[test]
fn dft_partition_cancellation_at_preset_dimensions() {
    // every (antennas, rf) pair the presets touch, both ends of the link
    let pairs = [
        (16usize, 2usize),
        (32, 4),
        (64, 8),
        (128, 16),
        (256, 32),
        (8, 2),
        (16, 4),
        (32, 8),
        (64, 16),
        (128, 32),
    ];
    for &(n, r) in &pairs {
        let bank = dft_matrix(n);
        let mut acc = ComplexMatrix::zeros(n, n);
        for k in 0..n / r {
            let block = bank.col_block(k * r, (k + 1) * r);
            acc = acc.add(&block.mul(&block.dagger()));
        }
        let err = acc.sub(&ComplexMatrix::identity(n)).fro_norm();
        assert!(
            err <= 1e-10,
            "partition cancellation failed at n={n}, r={r}: {err:.3e}"
        );
    }
    println!(
        "[PASS] DFT partition cancellation: {} (antennas, rf) pairs at 1e-10",
        pairs.len()
    );
}

#[test]
fn residual_and_eigenvalue_bounds_over_distorted_runs() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut runs = 0usize;
    while runs < 500 {
        let m_dim = [16usize, 32, 64][runs % 3];
        let depth = 2 + runs % 7; // 2..=8
        let paths = 2 + runs % 4;
        let channel = sample_channel(m_dim, m_dim / 2, paths, &mut rng);
        let a = channel.h.dagger().mul(&channel.h);
        // distortion energy about a tenth of the operator scale
        let variance = 0.01 * a.fro_norm_sq() / m_dim as f64;
        let q1 = random_unit_vector(m_dim, &mut rng);
        let mut oracle = DistortedOracle::new(&a, variance, &mut rng);
        let state = arnoldi_build(&mut oracle, depth, &q1).unwrap();
        let transcript = oracle.transcript;

        for cert in residual_certificate(&state, &transcript, &a).unwrap() {
            assert!(
                cert.residual_sq <= cert.bound * (1.0 + 1e-6),
                "run {runs}: residual {:.6e} above bound {:.6e}",
                cert.residual_sq,
                cert.bound
            );
        }

        let bound = eig_perturbation_bound(&transcript, state.completed);
        let noisy = eigvals_dense(&state.square_hess()).unwrap();
        let pure = eigvals_dense(&projected_operator(&state, &transcript, &a).unwrap()).unwrap();
        for gap in nearest_match_gaps(&noisy, &pure) {
            assert!(
                gap <= bound * (1.0 + 1e-6),
                "run {runs}: eigenvalue gap {gap:.6e} above {bound:.6e}"
            );
        }
        runs += 1;
    }
    println!(
        "[PASS] residual + eigenvalue perturbation bounds: 500 distorted runs \
         (m <= 8, antennas <= 64), zero violations, {:.2?}",
        start.elapsed()
    );
}

#[test]
fn echo_perturbation_ceiling_over_noiseless_runs() {
    let start = Instant::now();
    let cfg = HybridConfig::new(32, 16, 4, 2, 4, 10.0).unwrap().noiseless();
    let mut worst_margin = f64::INFINITY;
    for trial in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + trial);
        let channel = sample_channel(32, 16, 3, &mut rng);
        let run = sed(
            &channel,
            &cfg,
            SedSeeds::for_trial(77, trial, 0),
            &PipelineOptions::default(),
        )
        .unwrap();
        let a = channel.h.dagger().mul(&channel.h);
        let noisy = eigvals_dense(&run.gamma_state.square_hess()).unwrap();
        let pure = eigvals_dense(
            &projected_operator(&run.gamma_state, &run.gamma_estimate.transcript, &a).unwrap(),
        )
        .unwrap();
        let ceiling = echo_perturbation_ceiling(&channel, &cfg);
        for gap in nearest_match_gaps(&noisy, &pure) {
            assert!(
                gap <= ceiling,
                "trial {trial}: gap {gap:.4e} above ceiling {ceiling:.4e}"
            );
            worst_margin = worst_margin.min(ceiling - gap);
        }
    }
    println!(
        "[PASS] echoing perturbation ceiling: 500 noiseless runs, worst margin \
         {worst_margin:.3e}, {:.2?}",
        start.elapsed()
    );
}

#[test]
fn closed_form_vector_decomposition_beats_grid_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let scale = 1.0 / 2.0_f64.sqrt();
    let phase_grid: Vec<C64> = (0..64)
        .map(|p| C64::from_polar(scale, 2.0 * PI * p as f64 / 64.0))
        .collect();
    for draw in 0..1000 {
        let gamma: Vec<C64> = (0..2)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let (f, g) = decompose_vector(&gamma);
        let closed: f64 = gamma
            .iter()
            .zip(&f)
            .map(|(gi, fi)| (gi - fi * g).norm_sqr())
            .sum();
        let g_max = 2.0 * vec_one_norm(&gamma) * scale;
        for f0 in &phase_grid {
            for f1 in &phase_grid {
                for k in 0..200 {
                    let cand_g = g_max * k as f64 / 199.0;
                    let value = (gamma[0] - f0 * cand_g).norm_sqr()
                        + (gamma[1] - f1 * cand_g).norm_sqr();
                    assert!(
                        closed <= value + 1e-9,
                        "draw {draw}: closed form {closed:.9} beaten by grid {value:.9}"
                    );
                }
            }
        }
    }
    println!(
        "[PASS] closed-form single-column decomposition optimal against \
         64x64x200 grid oracle, 1000 draws, {:.2?}",
        start.elapsed()
    );
}

#[test]
fn power_constraint_on_every_decomposition_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5000);
    let dict64 = ula_dictionary(64, 256);
    let mut outputs = 0usize;
    for d in 1..=4usize {
        for _ in 0..25 {
            let target = random_unitary(64, d, &mut rng);
            let norm_sq = target.fro_norm_sq();
            let pairs = vec![
                bcd_sd(&target, 200, 1e-8).unwrap().0,
                columnwise_decompose(&target),
                omp_decompose(&target, &dict64, 10).unwrap(),
            ];
            for pair in pairs {
                let power = pair.analog.mul(&pair.digital).fro_norm_sq();
                assert!(
                    power <= d as f64 * norm_sq * (1.0 + 1e-9),
                    "raw power bound violated: {power} vs d*|T|^2 = {}",
                    d as f64 * norm_sq
                );
                assert!(is_constant_modulus(&pair.analog, 1e-12));
                outputs += 1;
            }
            // unit-Frobenius normalization form of the same bound
            let unit_target = target.scale_re(1.0 / norm_sq.sqrt());
            let (pair, _) = bcd_sd(&unit_target, 200, 1e-8).unwrap();
            let power = pair.analog.mul(&pair.digital).fro_norm_sq();
            assert!(
                power <= d as f64 * (1.0 + 1e-9),
                "normalized power bound violated: {power} vs d = {d}"
            );
            outputs += 1;
        }
    }
    println!("[PASS] effective-precoder power bound held on {outputs} decomposition outputs");
}

// ---- 2. figure-level reproductions (desk scale) ----

fn mean_for(rows: &[hybridsim::metrics::TrialResult], scheme: &str, field: impl Fn(&hybridsim::metrics::TrialResult) -> f64) -> f64 {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.scheme == scheme && r.status == "ok")
        .map(|r| field(r))
        .collect();
    assert!(!vals.is_empty(), "no ok rows for scheme {scheme}");
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn decomposition_distance_ordering_across_stream_counts() {
    let start = Instant::now();
    for cfg in preset_scenarios("fig3", 11).unwrap() {
        let outcome = run_scenario(&cfg).unwrap();
        assert_eq!(
            outcome.rows.len(),
            200 * 3,
            "expected 200 trials x 3 schemes"
        );
        let bcd = mean_for(&outcome.rows, "BCD-SD", |r| r.decomp_dist);
        let omp = mean_for(&outcome.rows, "OMP-baseline", |r| r.decomp_dist);
        let cw = mean_for(&outcome.rows, "columnwise", |r| r.decomp_dist);
        assert!(
            bcd < omp,
            "{}: BCD-SD mean {bcd:.4} not below OMP mean {omp:.4}",
            cfg.label
        );
        assert!(
            bcd <= cw && cw <= omp,
            "{}: columnwise mean {cw:.4} outside [{bcd:.4}, {omp:.4}]",
            cfg.label
        );
        println!(
            "[PASS] {}: mean distances BCD-SD {bcd:.4} <= columnwise {cw:.4} <= OMP {omp:.4}",
            cfg.label
        );
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 300.0,
        "decomposition sweep took {elapsed:?}, budget 5 min"
    );
    println!("[PASS] decomposition distance ordering at d = 1..4, {elapsed:.2?}");
}

#[test]
fn rate_tracks_the_bound_at_desk_scale() {
    let start = Instant::now();
    let cfg = ScenarioConfig {
        label: "rate_gate".into(),
        kind: ScenarioKind::Link(LinkScenario {
            bs_antennas: 128,
            ms_antennas: 64,
            rf_chains: 16,
            streams: 2,
            paths: 3,
            depth: 6,
            mtqr_iterations: None,
        }),
        schemes: vec![Scheme::Sed, Scheme::Mtqr, Scheme::Opt],
        snr_db: vec![-10.0, -5.0, 0.0, 5.0, 10.0],
        trials: 100,
        seed: 21,
        emit_waterfill: false,
        transcripts: TranscriptVerbosity::Off,
    };
    let outcome = run_scenario(&cfg).unwrap();
    for &snr_db in &cfg.snr_db {
        let rows: Vec<_> = outcome
            .rows
            .iter()
            .filter(|r| r.snr_db == snr_db)
            .cloned()
            .collect();
        let sed_mean = mean_for(&rows, "SED", |r| r.rate_bits);
        let mtqr_mean = mean_for(&rows, "MTQR", |r| r.rate_bits);
        let opt_mean = mean_for(&rows, "OPT", |r| r.rate_bits);
        if snr_db >= 0.0 {
            assert!(
                sed_mean >= 0.9 * opt_mean,
                "snr {snr_db}: SED mean {sed_mean:.3} below 90% of bound {opt_mean:.3}"
            );
        }
        let ratio = (sed_mean - mtqr_mean).abs() / sed_mean.min(mtqr_mean);
        assert!(
            ratio <= 0.15,
            "snr {snr_db}: SED {sed_mean:.3} vs MTQR {mtqr_mean:.3} differ by {:.1}%",
            100.0 * ratio
        );
        println!(
            "[PASS] rate gate at {snr_db:+.0} dB: SED {sed_mean:.2}, MTQR {mtqr_mean:.2}, \
             bound {opt_mean:.2}"
        );
    }
    let elapsed = start.elapsed();
    assert!(
        elapsed.as_secs_f64() < 900.0,
        "rate sweep took {elapsed:?}, budget 15 min"
    );
    println!("[PASS] desk-scale rate reproduction (128x64, d=2), {elapsed:.2?}");
}

#[test]
fn rate_robust_to_path_count() {
    let start = Instant::now();
    let mut means = Vec::new();
    for paths in [2usize, 4, 6, 8] {
        let cfg = ScenarioConfig {
            label: format!("paths_{paths}"),
            kind: ScenarioKind::Link(LinkScenario {
                bs_antennas: 64,
                ms_antennas: 32,
                rf_chains: 8,
                streams: 2,
                paths,
                depth: 6,
                mtqr_iterations: None,
            }),
            schemes: vec![Scheme::Sed],
            snr_db: vec![-5.0],
            trials: 100,
            seed: 31,
            emit_waterfill: false,
            transcripts: TranscriptVerbosity::Off,
        };
        let outcome = run_scenario(&cfg).unwrap();
        means.push(mean_for(&outcome.rows, "SED", |r| r.rate_bits));
    }
    let (first, last) = (means[0], means[3]);
    let degradation = (first - last) / first;
    assert!(
        degradation < 0.25,
        "rate degraded {:.1}% from 2 to 8 paths (means {means:?})",
        100.0 * degradation
    );
    println!(
        "[PASS] path-count robustness at -5 dB: means {:?}, degradation {:.1}% < 25%, {:.2?}",
        means
            .iter()
            .map(|m| (m * 100.0).round() / 100.0)
            .collect::<Vec<_>>(),
        100.0 * degradation,
        start.elapsed()
    );
}

#[test]
fn estimation_angle_improves_with_snr() {
    let start = Instant::now();
    let cfg = ScenarioConfig {
        label: "angle_gate".into(),
        kind: ScenarioKind::Link(LinkScenario {
            bs_antennas: 64,
            ms_antennas: 32,
            rf_chains: 8,
            streams: 3,
            paths: 4,
            depth: 6,
            mtqr_iterations: None,
        }),
        schemes: vec![Scheme::Sed],
        snr_db: vec![-10.0, 0.0, 10.0, 20.0],
        trials: 100,
        seed: 41,
        emit_waterfill: false,
        transcripts: TranscriptVerbosity::Off,
    };
    let outcome = run_scenario(&cfg).unwrap();
    let mut means = Vec::new();
    for &snr_db in &cfg.snr_db {
        let rows: Vec<_> = outcome
            .rows
            .iter()
            .filter(|r| r.snr_db == snr_db)
            .cloned()
            .collect();
        means.push(mean_for(&rows, "SED", |r| r.subspace_angle_rad));
    }
    for w in means.windows(2) {
        assert!(
            w[1] < w[0],
            "mean largest angle not strictly decreasing: {means:?}"
        );
    }
    println!(
        "[PASS] mean largest principal angle strictly decreasing over SNR: {:?}, {:.2?}",
        means
            .iter()
            .map(|m| (m * 1000.0).round() / 1000.0)
            .collect::<Vec<_>>(),
        start.elapsed()
    );
}

#[test]
fn overhead_operating_points_are_exact() {
    let shallow = HybridConfig::new(128, 64, 16, 1, 3, 1.0).unwrap();
    assert_eq!(overhead(EchoScheme::Sed, &shallow, None), 72);
    let deep = HybridConfig::new(128, 64, 16, 2, 6, 1.0).unwrap();
    assert_eq!(overhead(EchoScheme::Sed, &deep, None), 144);
    assert_eq!(overhead(EchoScheme::Mtqr, &deep, Some(6)), 144);
    println!("[PASS] overhead table: 72 at depth 3 and 144 at depth 6 for 128x64, r=16");
}

// ---- 3. noise-free convergence ----

#[test]
fn full_depth_exact_oracle_recovers_the_dominant_subspace() {
    let start = Instant::now();
    let (m_dim, n_dim, d) = (32usize, 16usize, 3usize);
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(6000 + trial);
        let channel = sample_channel(m_dim, n_dim, d, &mut rng); // rank-d channel
        let a = channel.h.dagger().mul(&channel.h);
        let q1 = random_unit_vector(m_dim, &mut rng);
        let mut oracle = ExactOracle { matrix: &a };
        let state = arnoldi_build(&mut oracle, m_dim, &q1).unwrap();
        let est = ritz_extract(&state, d, DistortionTranscript::new(m_dim)).unwrap();
        let truth = svd_thin(&channel.h, d).unwrap();
        let angles = principal_angles(&est.basis, &truth.right).unwrap();
        for angle in &angles {
            assert!(
                *angle <= 1e-6,
                "trial {trial}: principal angle {angle:.3e} above 1e-6"
            );
        }
    }
    println!(
        "[PASS] exact-oracle full-depth estimation: 100 rank-d channels, all \
         principal angles <= 1e-6, {:.2?}",
        start.elapsed()
    );
}

// ---- 4. determinism ----

#[test]
fn preset_rerun_is_byte_identical() {
    let mut cfg = preset_scenarios("fig6", 9).unwrap().remove(0);
    cfg.trials = 10;
    let a = run_scenario(&cfg).unwrap();
    let b = run_scenario(&cfg).unwrap();
    let csv_a = rows_to_csv(&a.rows, cfg.emit_waterfill);
    let csv_b = rows_to_csv(&b.rows, cfg.emit_waterfill);
    assert_eq!(csv_a, csv_b, "rerun produced different bytes");
    assert!(!csv_a.is_empty());
    println!(
        "[PASS] determinism: preset rerun reproduced {} CSV bytes exactly",
        csv_a.len()
    );
}

// ---- supporting invariants exercised at the acceptance level ----

#[test]
fn rate_never_exceeds_the_bound_across_sweeps() {
    let cfg = ScenarioConfig {
        label: "bound_check".into(),
        kind: ScenarioKind::Link(LinkScenario {
            bs_antennas: 32,
            ms_antennas: 16,
            rf_chains: 4,
            streams: 2,
            paths: 3,
            depth: 4,
            mtqr_iterations: None,
        }),
        schemes: vec![
            Scheme::Sed,
            Scheme::Mtqr,
            Scheme::OptimalDecomp,
            Scheme::Columnwise,
            Scheme::OmpBaseline,
        ],
        snr_db: vec![-10.0, 0.0, 10.0],
        trials: 50,
        seed: 51,
        emit_waterfill: false,
        transcripts: TranscriptVerbosity::Off,
    };
    let outcome = run_scenario(&cfg).unwrap();
    for row in &outcome.rows {
        if row.status == "ok" {
            assert!(
                row.rate_bits <= row.opt_rate_bits + 1e-9,
                "row exceeded the optimal-rate bound: {row:?}"
            );
        }
    }
    println!(
        "[PASS] user rate never exceeded the fully digital bound over {} rows",
        outcome.rows.len()
    );
}

#[test]
fn projection_idempotent_and_phase_covariant_at_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    for _ in 0..50 {
        let x = gaussian_matrix(64, 3, &mut rng);
        let y = project_constant_modulus(&x);
        assert!(project_constant_modulus(&y).sub(&y).fro_norm() <= 1e-13);
        let alpha = C64::from_polar(1.0, rng.gen_range(-PI..PI));
        let rotated = project_constant_modulus(&x.scale(alpha));
        assert!(rotated.sub(&y.scale(alpha)).fro_norm() <= 1e-10);
    }
    println!("[PASS] constant-modulus projection idempotent and phase covariant");
}
