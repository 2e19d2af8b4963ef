//! Transductive deep transfer learning (TDTL) with a sparse, learnable
//! target label matrix, together with subspace/kernel adaptation baselines,
//! LBP and SIFT descriptors, a synthetic multi-view domain-shift generator,
//! and classification metrics.

pub mod adapt;
pub mod cli;
pub mod data;
pub mod error;
pub mod features;
pub mod linalg;
pub mod nn;
pub mod tdtl;

pub use error::{Error, Result};

/// The one PRNG used for all stochastic steps (initialization, dropout,
/// batch sampling, label-matrix initialization, synthetic data).
pub type SeededRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    <SeededRng as rand::SeedableRng>::seed_from_u64(seed)
}
