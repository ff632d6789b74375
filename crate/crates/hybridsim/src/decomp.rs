//! Factor an estimated subspace basis into a constant-modulus analog matrix
//! times a small digital matrix.
//!
//! Routes, from cheapest to strongest: the closed-form single-column
//! decomposition, its column-wise generalization, alternating least squares
//! with a projection onto the constant-modulus set (keeping the best iterate
//! seen), and a greedy matching-pursuit baseline over an array-response
//! dictionary. A stochastic search for truncated combiner banks rounds the
//! module out.

use crate::linalg::{
    condition_number, dft_matrix, inverse, least_squares, solve, vec_one_norm, ComplexMatrix, C64,
};
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

/// Condition-number ceiling past which an alternating update is abandoned.
pub const SINGULAR_COND: f64 = 1e12;

/// Analog × digital factor pair with the achieved squared distance to the
/// decomposition target.
#[derive(Debug, Clone, Serialize)]
pub struct HybridFactorPair {
    /// Constant-modulus factor; every entry has magnitude `1/√rows`.
    pub analog: ComplexMatrix,
    pub digital: ComplexMatrix,
    /// `‖target − analog·digital‖_F²`
    pub objective: f64,
}

/// Iteration diagnostics for the alternating decomposition.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecompReport {
    pub iterations: usize,
    pub converged: bool,
    /// Set when an update hit an ill-conditioned gram matrix and the best
    /// iterate so far was returned instead.
    pub singular_update: bool,
}

fn distance_sq(target: &ComplexMatrix, f: &ComplexMatrix, g: &ComplexMatrix) -> f64 {
    target.sub(&f.mul(g)).fro_norm_sq()
}

/// Euclidean projection onto the constant-modulus set: keep every entry's
/// phase, reset its magnitude to `1/√rows`. Zero entries map to phase 0 so
/// the projection stays deterministic.
pub fn project_constant_modulus(x: &ComplexMatrix) -> ComplexMatrix {
    let scale = 1.0 / (x.rows() as f64).sqrt();
    ComplexMatrix::from_fn(x.rows(), x.cols(), |i, j| {
        let z = x[(i, j)];
        if z.norm() == 0.0 {
            C64::new(scale, 0.0)
        } else {
            z / z.norm() * scale
        }
    })
}

/// Globally optimal single-column decomposition: the analog vector copies the
/// target's phases and the scalar gain is `‖γ‖₁/√M`.
pub fn decompose_vector(gamma: &[C64]) -> (Vec<C64>, f64) {
    let m = gamma.len();
    let scale = 1.0 / (m as f64).sqrt();
    let f: Vec<C64> = gamma
        .iter()
        .map(|z| {
            if z.norm() == 0.0 {
                C64::new(scale, 0.0)
            } else {
                z / z.norm() * scale
            }
        })
        .collect();
    let g = vec_one_norm(gamma) * scale;
    (f, g)
}

/// Column-by-column application of the closed form; the digital factor is
/// diagonal.
pub fn columnwise_decompose(target: &ComplexMatrix) -> HybridFactorPair {
    let d = target.cols();
    let mut f_cols = Vec::with_capacity(d);
    let mut gains = Vec::with_capacity(d);
    for j in 0..d {
        let (f, g) = decompose_vector(&target.col(j));
        f_cols.push(f);
        gains.push(C64::new(g, 0.0));
    }
    let analog = ComplexMatrix::from_cols(&f_cols);
    let digital = ComplexMatrix::diag(&gains);
    let objective = distance_sq(target, &analog, &digital);
    HybridFactorPair {
        analog,
        digital,
        objective,
    }
}

/// Alternating decomposition: least-squares digital update for the current
/// analog factor, then a least-squares analog update projected back onto the
/// constant-modulus set. Starts from the column-wise closed form and returns
/// the best (lowest-objective) digital-aligned iterate seen.
pub fn bcd_sd(
    target: &ComplexMatrix,
    max_iter: usize,
    tol: f64,
) -> Result<(HybridFactorPair, DecompReport)> {
    let init = columnwise_decompose(target);
    let mut best = init.clone();
    let mut f = init.analog;
    let mut report = DecompReport {
        iterations: 0,
        converged: false,
        singular_update: false,
    };

    let mut prev_obj = f64::INFINITY;
    for iter in 0..max_iter {
        report.iterations = iter + 1;

        let ftf = f.dagger().mul(&f);
        if condition_number(&ftf) > SINGULAR_COND {
            report.singular_update = true;
            break;
        }
        let g = solve(&ftf, &f.dagger().mul(target))?;
        let obj = distance_sq(target, &f, &g);
        if obj < best.objective {
            best = HybridFactorPair {
                analog: f.clone(),
                digital: g.clone(),
                objective: obj,
            };
        }
        if prev_obj - obj < tol {
            report.converged = true;
            break;
        }
        prev_obj = obj;

        let ggt = g.mul(&g.dagger());
        if condition_number(&ggt) > SINGULAR_COND {
            report.singular_update = true;
            break;
        }
        let f_ls = target.mul(&g.dagger()).mul(&inverse(&ggt)?);
        f = project_constant_modulus(&f_ls);
    }
    Ok((best, report))
}

/// Steering-vector dictionary: `grid` ULA responses with sines uniform over
/// the angle range.
pub fn ula_dictionary(antennas: usize, grid: usize) -> ComplexMatrix {
    let cols: Vec<Vec<C64>> = (0..grid)
        .map(|i| {
            let angle = -PI / 2.0 + PI * (i as f64) / (grid as f64);
            crate::channel::ula_response(angle, antennas)
        })
        .collect();
    ComplexMatrix::from_cols(&cols)
}

/// Greedy matching pursuit over a constant-modulus dictionary: pick the atom
/// most correlated with the residual, refit the digital factor by least
/// squares, repeat for `r_atoms` rounds.
pub fn omp_decompose(
    target: &ComplexMatrix,
    dictionary: &ComplexMatrix,
    r_atoms: usize,
) -> Result<HybridFactorPair> {
    if dictionary.rows() != target.rows() {
        return Err(Error::DimensionMismatch(
            "dictionary row count must match the target".into(),
        ));
    }
    let n_atoms = dictionary.cols();
    if r_atoms == 0 || r_atoms > n_atoms {
        return Err(Error::Config(format!(
            "r_atoms={r_atoms} out of range for a {n_atoms}-atom dictionary"
        )));
    }

    let mut selected: Vec<usize> = Vec::with_capacity(r_atoms);
    let mut residual = target.clone();
    let mut analog = ComplexMatrix::zeros(target.rows(), 1);
    let mut digital = ComplexMatrix::zeros(1, target.cols());

    for _ in 0..r_atoms {
        let corr = dictionary.dagger().mul(&residual);
        let mut best_atom = None;
        let mut best_power = -1.0;
        for k in 0..n_atoms {
            if selected.contains(&k) {
                continue;
            }
            let power: f64 = (0..corr.cols()).map(|j| corr[(k, j)].norm_sqr()).sum();
            if power > best_power {
                best_power = power;
                best_atom = Some(k);
            }
        }
        selected.push(best_atom.expect("dictionary larger than r_atoms"));

        let cols: Vec<Vec<C64>> = selected.iter().map(|&k| dictionary.col(k)).collect();
        analog = ComplexMatrix::from_cols(&cols);
        digital = least_squares(&analog, target)?;
        residual = target.sub(&analog.mul(&digital));
    }
    Ok(HybridFactorPair {
        analog,
        digital,
        objective: residual.fro_norm_sq(),
    })
}

/// Annealing schedule for the truncated combiner-bank search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealParams {
    pub initial_temp: f64,
    pub cooling: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            initial_temp: 1.0,
            cooling: 0.995,
            steps: 100_000,
            seed: 1,
        }
    }
}

fn bank_objective(d: &ComplexMatrix) -> f64 {
    let m = d.rows();
    let gram = d.mul(&d.dagger());
    let target = ComplexMatrix::identity(m).scale_re(1.0 / m as f64);
    target.sub(&gram).fro_norm_sq()
}

/// Search for a constant-modulus `M × (ηM)` bank whose outer product
/// approximates `(1/M)·I`: single-entry phase moves, geometric cooling,
/// best-seen state returned with its objective. Seeded with the leading
/// columns of the DFT matrix.
pub fn design_truncated_dft(
    antennas: usize,
    eta: f64,
    params: &AnnealParams,
) -> Result<(ComplexMatrix, f64)> {
    let k_float = eta * antennas as f64;
    let k = k_float.round() as usize;
    if !(0.0 < eta && eta <= 1.0) || (k_float - k as f64).abs() > 1e-9 || k == 0 {
        return Err(Error::Config(format!(
            "eta={eta} must make eta*M a positive integer (M={antennas})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let scale = 1.0 / (antennas as f64).sqrt();

    let mut current = dft_matrix(antennas).col_block(0, k);
    let mut current_obj = bank_objective(&current);
    let mut best = current.clone();
    let mut best_obj = current_obj;

    let mut temp = params.initial_temp;
    for _ in 0..params.steps {
        let i = rng.gen_range(0..antennas);
        let j = rng.gen_range(0..k);
        let old = current[(i, j)];
        let phase: f64 = rng.gen_range(-PI..PI);
        current[(i, j)] = C64::from_polar(scale, phase);
        let candidate_obj = bank_objective(&current);
        let delta = candidate_obj - current_obj;
        let accept = delta <= 0.0 || rng.gen::<f64>() < (-delta / temp.max(1e-300)).exp();
        if accept {
            current_obj = candidate_obj;
            if candidate_obj < best_obj {
                best_obj = candidate_obj;
                best = current.clone();
            }
        } else {
            current[(i, j)] = old;
        }
        temp *= params.cooling;
    }
    Ok((best, best_obj))
}

#[derive(Serialize, Deserialize)]
struct AnnealedBank {
    antennas: usize,
    columns: usize,
    seed: u64,
    objective: f64,
    matrix: ComplexMatrix,
}

pub fn annealed_cache_path(dir: &Path, antennas: usize, columns: usize, seed: u64) -> PathBuf {
    dir.join(format!("truncated_bank_M{antennas}_K{columns}_seed{seed}.json"))
}

/// Persist an annealed bank keyed by `(M, ηM, seed)`.
pub fn save_annealed_bank(
    dir: &Path,
    seed: u64,
    matrix: &ComplexMatrix,
    objective: f64,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = annealed_cache_path(dir, matrix.rows(), matrix.cols(), seed);
    let payload = AnnealedBank {
        antennas: matrix.rows(),
        columns: matrix.cols(),
        seed,
        objective,
        matrix: matrix.clone(),
    };
    std::fs::write(&path, serde_json::to_string_pretty(&payload)?)?;
    Ok(path)
}

pub fn load_annealed_bank(
    dir: &Path,
    antennas: usize,
    columns: usize,
    seed: u64,
) -> Result<Option<(ComplexMatrix, f64)>> {
    let path = annealed_cache_path(dir, antennas, columns, seed);
    if !path.exists() {
        return Ok(None);
    }
    let payload: AnnealedBank = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(Some((payload.matrix, payload.objective)))
}

/// Check the constant-modulus invariant at the stated tolerance.
pub fn is_constant_modulus(m: &ComplexMatrix, tol: f64) -> bool {
    let want = 1.0 / (m.rows() as f64).sqrt();
    m.entries().iter().all(|z| (z.norm() - want).abs() <= tol)
}
