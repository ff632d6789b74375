//! Krylov subspace estimation through a pluggable matvec oracle.
//!
//! The oracle hands back an *estimate* of `A·q` — in this crate usually the
//! output of an echoing protocol, with noise and decomposition errors folded
//! in. The builder runs a Gram-Schmidt orthogonalization (applied twice per
//! iteration, which keeps the basis orthonormal to ~1e-14 even under noisy
//! oracles), records the projected Hessenberg matrix, and the Ritz extraction
//! step turns its dominant eigenpairs into a subspace estimate.
//!
//! When the true operator is available (test and certificate contexts), the
//! recorded distortion transcript supports two runtime certificates: a
//! residual bound on each approximate Ritz pair, and a Bauer-Fike-style
//! eigenvalue perturbation bound.

use crate::linalg::{
    dot_conj, eig_dense, hessenberg_eig, qr_orthonormal, vec_norm2, vec_sub_scaled, ComplexMatrix,
    C64,
};
use crate::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Residual norms at or below `BREAKDOWN_TOL·‖p‖` stop the iteration early.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Estimate of `A·q` for the sounded direction `q`.
pub trait MatvecOracle {
    fn apply(&mut self, q: &[C64]) -> Result<Vec<C64>>;

    /// Operator dimension (length of the vectors exchanged).
    fn dim(&self) -> usize;
}

/// Exact multiply — the reference oracle.
pub struct ExactOracle<'a> {
    pub matrix: &'a ComplexMatrix,
}

impl MatvecOracle for ExactOracle<'_> {
    fn apply(&mut self, q: &[C64]) -> Result<Vec<C64>> {
        Ok(self.matrix.mul_vec(q))
    }

    fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Exact multiply plus additive complex Gaussian distortion, recording every
/// injected vector.
pub struct DistortedOracle<'a, R: Rng> {
    pub matrix: &'a ComplexMatrix,
    pub variance: f64,
    pub rng: &'a mut R,
    pub transcript: DistortionTranscript,
}

impl<'a, R: Rng> DistortedOracle<'a, R> {
    pub fn new(matrix: &'a ComplexMatrix, variance: f64, rng: &'a mut R) -> Self {
        let dim = matrix.rows();
        Self {
            matrix,
            variance,
            rng,
            transcript: DistortionTranscript::new(dim),
        }
    }
}

impl<R: Rng> MatvecOracle for DistortedOracle<'_, R> {
    fn apply(&mut self, q: &[C64]) -> Result<Vec<C64>> {
        let mut p = self.matrix.mul_vec(q);
        let w = crate::channel::awgn(p.len(), self.variance, self.rng);
        for (pi, wi) in p.iter_mut().zip(&w) {
            *pi += wi;
        }
        self.transcript.push(w.clone(), None, None, vec![w]);
        Ok(p)
    }

    fn dim(&self) -> usize {
        self.matrix.rows()
    }
}

/// Per-iteration record of the effective oracle distortion
/// `w̃_l = p_l − A·q_l`, with whatever per-side components produced it.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DistortionTranscript {
    pub dim: usize,
    /// `w̃_l`, one column per iteration.
    pub distortion_cols: Vec<Vec<C64>>,
    /// BS-side decomposition errors, when the oracle is an echoing protocol.
    pub bs_errors: Vec<Vec<C64>>,
    /// MS-side decomposition errors.
    pub ms_errors: Vec<Vec<C64>>,
    /// Raw noise draws (layout oracle-specific).
    pub noise_draws: Vec<Vec<C64>>,
}

impl DistortionTranscript {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Default::default()
        }
    }

    pub fn push(
        &mut self,
        distortion: Vec<C64>,
        bs_error: Option<Vec<C64>>,
        ms_error: Option<Vec<C64>>,
        noise: Vec<Vec<C64>>,
    ) {
        debug_assert_eq!(distortion.len(), self.dim);
        self.distortion_cols.push(distortion);
        if let Some(e) = bs_error {
            self.bs_errors.push(e);
        }
        if let Some(e) = ms_error {
            self.ms_errors.push(e);
        }
        self.noise_draws.extend(noise);
    }

    pub fn iterations(&self) -> usize {
        self.distortion_cols.len()
    }

    /// The distortion matrix over the first `m` iterations.
    pub fn w_tilde(&self, m: usize) -> ComplexMatrix {
        assert!(m >= 1 && m <= self.iterations());
        ComplexMatrix::from_cols(&self.distortion_cols[..m])
    }

    pub fn w_tilde_fro(&self, m: usize) -> f64 {
        self.distortion_cols[..m]
            .iter()
            .flat_map(|c| c.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Output of the iteration: orthonormal basis and projected Hessenberg matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ArnoldiState {
    /// Basis columns; `completed + 1` of them, or `completed` on breakdown.
    pub basis: ComplexMatrix,
    /// `(completed+1) × completed` upper-Hessenberg projection; subdiagonal
    /// entries are residual norms, real and nonnegative.
    pub hess: ComplexMatrix,
    /// Iterations that ran.
    pub completed: usize,
    /// 1-based iteration at which the residual vanished, if it did.
    pub breakdown: Option<usize>,
    /// `‖Q†Q − I‖_F` of the final basis; drift is surfaced, never hidden.
    pub ortho_defect: f64,
}

impl ArnoldiState {
    /// First `m` basis columns.
    pub fn basis_cols(&self, m: usize) -> ComplexMatrix {
        self.basis.col_block(0, m)
    }

    /// Square top block of the Hessenberg projection.
    pub fn square_hess(&self) -> ComplexMatrix {
        self.hess.top_left(self.completed, self.completed)
    }

    /// Final subdiagonal entry `t_{m+1,m}` (zero exactly at breakdown).
    pub fn trailing_subdiag(&self) -> f64 {
        self.hess[(self.completed, self.completed - 1)].re
    }
}

/// Run up to `depth` iterations of the estimation loop from the unit-norm
/// start vector `q1`.
///
/// Breakdown (a vanishing residual) is a normal early stop: the returned
/// state simply spans a smaller invariant subspace.
pub fn arnoldi_build(
    oracle: &mut dyn MatvecOracle,
    depth: usize,
    q1: &[C64],
) -> Result<ArnoldiState> {
    let dim = q1.len();
    if depth < 1 {
        return Err(Error::Config("Krylov depth must be at least 1".into()));
    }
    if oracle.dim() != dim {
        return Err(Error::DimensionMismatch(format!(
            "oracle dim {} vs start vector {}",
            oracle.dim(),
            dim
        )));
    }
    if (vec_norm2(q1) - 1.0).abs() > 1e-12 {
        return Err(Error::Config("start vector must be unit norm".into()));
    }

    let mut q_cols: Vec<Vec<C64>> = vec![q1.to_vec()];
    let mut hess = ComplexMatrix::zeros(depth + 1, depth);
    let mut completed = 0;
    let mut breakdown = None;

    for l in 0..depth {
        let p = oracle.apply(&q_cols[l])?;
        if p.len() != dim {
            return Err(Error::Oracle(format!(
                "oracle returned length {} vector, expected {dim}",
                p.len()
            )));
        }
        let p_norm = vec_norm2(&p);
        let mut resid = p;
        // Gram-Schmidt, applied twice
        for _pass in 0..2 {
            let coeffs: Vec<C64> = q_cols[..=l]
                .iter()
                .map(|qk| dot_conj(qk, &resid))
                .collect();
            for (k, c) in coeffs.iter().enumerate() {
                vec_sub_scaled(&mut resid, &q_cols[k], *c);
                hess[(k, l)] += c;
            }
        }
        let r_norm = vec_norm2(&resid);
        hess[(l + 1, l)] = C64::new(r_norm, 0.0);
        completed = l + 1;
        if r_norm <= BREAKDOWN_TOL * p_norm {
            breakdown = Some(l + 1);
            break;
        }
        for z in resid.iter_mut() {
            *z /= r_norm;
        }
        q_cols.push(resid);
    }

    let basis = ComplexMatrix::from_cols(&q_cols);
    let gram = basis.dagger().mul(&basis);
    let ortho_defect = gram
        .sub(&ComplexMatrix::identity(gram.rows()))
        .fro_norm();
    Ok(ArnoldiState {
        basis,
        hess: hess.top_left(completed + 1, completed),
        completed,
        breakdown,
        ortho_defect,
    })
}

/// Subspace estimate: orthonormal basis for the dominant approximate
/// eigenvectors, with the square roots of the Ritz magnitudes as estimated
/// singular values.
#[derive(Debug, Clone, Serialize)]
pub struct SubspaceEstimate {
    pub basis: ComplexMatrix,
    pub ritz_values: Vec<f64>,
    pub transcript: DistortionTranscript,
}

/// Extract the `d` dominant Ritz pairs of the square Hessenberg block and
/// orthonormalize their images under the basis.
pub fn ritz_extract(
    state: &ArnoldiState,
    d: usize,
    transcript: DistortionTranscript,
) -> Result<SubspaceEstimate> {
    let m = state.completed;
    if m < d {
        return Err(Error::InsufficientDepth {
            needed: d,
            available: m,
        });
    }
    let t_sq = state.square_hess();
    let (vecs, vals) = hessenberg_eig(&t_sq)?;
    let theta = vecs.col_block(0, d);
    let basis = qr_orthonormal(&state.basis_cols(m).mul(&theta))?;
    let ritz_values: Vec<f64> = vals[..d].iter().map(|lam| lam.norm().sqrt()).collect();
    Ok(SubspaceEstimate {
        basis,
        ritz_values,
        transcript,
    })
}

/// One approximate Ritz pair with its residual and certified bound.
#[derive(Debug, Clone, Serialize)]
pub struct RitzCertificate {
    pub eigenvalue: C64,
    /// `‖A θ − λ θ‖₂²`
    pub residual_sq: f64,
    /// `c_m + ‖I − QQ†‖_F²·‖W̃‖_F²`
    pub bound: f64,
}

/// Rebuild the noise-free projection (upper part from exact products with
/// `a`, subdiagonal from the recorded residual norms), square block only.
fn pure_projection(state: &ArnoldiState, a: &ComplexMatrix) -> ComplexMatrix {
    let m = state.completed;
    let qm = state.basis_cols(m);
    let mut t = ComplexMatrix::zeros(m, m);
    for l in 0..m {
        let aq = a.mul_vec(&qm.col(l));
        for i in 0..=l {
            t[(i, l)] = dot_conj(&qm.col(i), &aq);
        }
    }
    for l in 0..m - 1 {
        t[(l + 1, l)] = state.hess[(l + 1, l)];
    }
    t
}

/// The computable projection `C = T̃ − Ẽ` of the true operator onto the
/// Krylov basis, reconstructed from the distortion transcript.
pub fn projected_operator(
    state: &ArnoldiState,
    transcript: &DistortionTranscript,
    a: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let m = state.completed;
    if transcript.iterations() < m {
        return Err(Error::Config(format!(
            "transcript covers {} iterations, state has {m}",
            transcript.iterations()
        )));
    }
    let qm = state.basis_cols(m);
    let t_pure = pure_projection(state, a);
    let e_lower = qm.dagger().mul(&transcript.w_tilde(m)).strictly_lower();
    Ok(t_pure.sub(&e_lower))
}

/// Residual certificate for every eigenpair of the projected operator: the
/// residual of the lifted pair against `a` must sit under
/// `c_m + ‖I − QQ†‖_F²·‖W̃‖_F²`.
pub fn residual_certificate(
    state: &ArnoldiState,
    transcript: &DistortionTranscript,
    a: &ComplexMatrix,
) -> Result<Vec<RitzCertificate>> {
    let m = state.completed;
    let qm = state.basis_cols(m);
    let c_matrix = projected_operator(state, transcript, a)?;
    let (s_vecs, lambdas) = eig_dense(&c_matrix)?;

    let gram = qm.dagger().mul(&qm);
    let trace_g: f64 = (0..m).map(|i| gram[(i, i)].re).sum();
    let dim = a.rows() as f64;
    // ‖I − QQ†‖_F² via trace identities, no dim×dim intermediate
    let proj_defect_sq = (dim - 2.0 * trace_g + gram.fro_norm_sq()).max(0.0);
    let w_fro_sq: f64 = transcript.w_tilde_fro(m).powi(2);
    let trailing = state.trailing_subdiag();

    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let s = s_vecs.col(i);
        let theta = qm.mul_vec(&s);
        let a_theta = a.mul_vec(&theta);
        let lam = lambdas[i];
        let residual_sq: f64 = a_theta
            .iter()
            .zip(&theta)
            .map(|(x, y)| (x - lam * y).norm_sqr())
            .sum();
        let c_m = (trailing * s[m - 1].norm()).powi(2);
        out.push(RitzCertificate {
            eigenvalue: lam,
            residual_sq,
            bound: c_m + proj_defect_sq * w_fro_sq,
        });
    }
    Ok(out)
}

/// Eigenvalue perturbation radius `√m·‖W̃_m‖_F`: every eigenvalue of the
/// noisy projection sits within this distance of an eigenvalue of the pure
/// one.
pub fn eig_perturbation_bound(transcript: &DistortionTranscript, m: usize) -> f64 {
    if transcript.iterations() < m || m == 0 {
        return 0.0;
    }
    (m as f64).sqrt() * transcript.w_tilde_fro(m)
}

/// Greedy minimal-distance assignment between two eigenvalue lists; returns
/// the matched gaps (one per pair).
pub fn nearest_match_gaps(lhs: &[C64], rhs: &[C64]) -> Vec<f64> {
    let n = lhs.len().min(rhs.len());
    let mut free_l: Vec<usize> = (0..lhs.len()).collect();
    let mut free_r: Vec<usize> = (0..rhs.len()).collect();
    let mut gaps = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best = (0usize, 0usize, f64::INFINITY);
        for (li, &l) in free_l.iter().enumerate() {
            for (ri, &r) in free_r.iter().enumerate() {
                let gap = (lhs[l] - rhs[r]).norm();
                if gap < best.2 {
                    best = (li, ri, gap);
                }
            }
        }
        gaps.push(best.2);
        free_l.swap_remove(best.0);
        free_r.swap_remove(best.1);
    }
    gaps
}

/// Uniform draw from the complex unit sphere (normalized Gaussian).
pub fn random_unit_vector(n: usize, rng: &mut impl Rng) -> Vec<C64> {
    loop {
        let v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        let norm = vec_norm2(&v);
        if norm > 1e-6 {
            return v.into_iter().map(|z| z / norm).collect();
        }
    }
}
