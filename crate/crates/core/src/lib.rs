//! One-class classification with discriminative subspaces.
//!
//! The toolkit trains a pair of orthonormal frames that sandwich the normal
//! class between them, by Riemannian conjugate gradient on a product of
//! Stiefel and Euclidean manifolds, then scores points by their margin
//! violations and projection energy. Higher score = more anomalous.
//!
//! Modules:
//! - [`manifold`]: Stiefel / generalized-Stiefel / product geometry.
//! - [`rcg`]: generic Riemannian conjugate-gradient minimizer.
//! - [`models`]: the BODS, GODS, and kernelized GODS objectives and fitting.
//! - [`inference`]: score thresholding (two-cluster rule / train quantile).
//! - [`data`]: CSV ingestion, normalization, splits, synthetic generators.
//! - [`metrics`]: F1 / F1-bar / TNR / NPV / accuracy / AUC / false alarms.
//!
//! All randomness flows through seeded ChaCha8 generators
//! ([`seeded_rng`]), which is part of the reproducibility contract: the same
//! seed produces the same splits, initializations, and synthetic datasets on
//! every platform.

pub mod data;
pub mod error;
pub mod inference;
pub mod manifold;
pub mod metrics;
pub mod models;
pub mod rcg;

pub use error::{Error, Result};

use rand_chacha::ChaCha8Rng;

/// The toolkit's seeded random number generator (ChaCha8).
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}
