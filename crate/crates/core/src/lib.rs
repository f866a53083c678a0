//! Bayesian similarity `P(same | x, x')` and what can be recovered from it.
//!
//! The crate works on synthetic problems whose joint distribution is known
//! exactly, so every construct can be checked against ground truth:
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`generative`] | Gaussian-mixture and finite-support class models, sampling, Bayes risk |
//! | [`similarity`] | Exact and kernel-estimated similarity oracles |
//! | [`reconstruction`] | Class posteriors from similarity (two-class and multi-class) |
//! | [`classify`] | Bayes, prototype, similarity-1-NN and reconstructed classifiers |
//! | [`hierarchical`] | Batched hierarchical models and batched similarity |
//! | [`discrimination`] | Same/different decisions without latent classes |

pub mod classify;
pub mod discrimination;
pub mod error;
pub mod generative;
pub mod hierarchical;
pub mod quadrature;
pub mod reconstruction;
pub mod rng;
pub mod similarity;

pub use error::{Error, Result};
pub use generative::{
    bayes_risk, sample, ClassModel, Component, DiscreteClassModel, EvalGrid, LabeledSample,
    MixtureClassModel,
};
pub use similarity::{
    draw_pairs, estimate_batched_similarity, estimate_similarity, exact_similarity,
    similarity_distance, LabeledPair, Provenance, SimilarityOracle,
};
