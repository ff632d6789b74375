//! Link-level simulation of subspace estimation and precoding for hybrid
//! analog-digital MIMO.
//!
//! The pipeline: sparse mmWave channels ([`channel`]) are probed through a
//! repetition-aided echoing protocol ([`link`]) that feeds a Krylov subspace
//! estimator ([`arnoldi`]); the estimated singular subspaces are factored into
//! constant-modulus analog and small digital precoders ([`decomp`]); rates and
//! subspace-quality metrics ([`metrics`]) are swept over Monte Carlo trials by
//! the scenario harness ([`harness`]).
//!
//! All randomness flows through explicitly seeded ChaCha streams, so every
//! sweep is reproducible byte-for-byte.

pub mod arnoldi;
pub mod channel;
pub mod cli;
pub mod decomp;
mod error;
pub mod harness;
pub mod linalg;
pub mod link;
pub mod metrics;
pub mod rng;

pub use error::{Error, Result};
