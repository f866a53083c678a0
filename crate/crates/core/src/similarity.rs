//! Bayesian similarity oracles `P(same | x, x')`.
//!
//! An oracle is either exact, computed from the class posteriors of a known
//! model as `Σ_i P(ω=i|x)·P(ω=i|x')`, or estimated from labeled pairs by
//! kernel regression of the same-label indicator over the concatenated pair
//! `(x, x')`.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generative::{check_dimension, ClassModel};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Exact,
    PairEstimated,
    BatchedEstimated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::PairEstimated => "pair-estimated",
            Provenance::BatchedEstimated => "batched-estimated",
        }
    }
}

type PairFn = dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync;

#[derive(Clone)]
enum Evaluator {
    Posterior(Arc<dyn ClassModel>),
    Kernel(Arc<PairKernelRegression>),
    Function(Arc<PairFn>),
}

/// Evaluable map `(x, x') -> P(same | x, x')`.
#[derive(Clone)]
pub struct SimilarityOracle {
    evaluator: Evaluator,
    provenance: Provenance,
    dimension: usize,
}

impl fmt::Debug for SimilarityOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.evaluator {
            Evaluator::Posterior(_) => "posterior",
            Evaluator::Kernel(_) => "kernel",
            Evaluator::Function(_) => "function",
        };
        f.debug_struct("SimilarityOracle")
            .field("evaluator", &kind)
            .field("provenance", &self.provenance)
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl SimilarityOracle {
    /// Wraps an arbitrary pair function. The caller is responsible for
    /// symmetry; outputs are clamped into `[0, 1]`.
    pub fn from_fn<F>(dimension: usize, provenance: Provenance, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            evaluator: Evaluator::Function(Arc::new(f)),
            provenance,
            dimension,
        }
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn evaluate(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        check_dimension(self.dimension, x.len())?;
        check_dimension(self.dimension, x_prime.len())?;
        let value = match &self.evaluator {
            Evaluator::Posterior(model) => {
                let p = model.class_posterior(x)?;
                let q = model.class_posterior(x_prime)?;
                dot(&p, &q)
            }
            Evaluator::Kernel(k) => k.predict(x, x_prime),
            Evaluator::Function(f) => f(x, x_prime)?,
        };
        Ok(value.clamp(0.0, 1.0))
    }

    /// For exact oracles, the posterior vector whose inner products give the
    /// similarity. Lets callers precompute one side of many evaluations.
    pub fn embedding(&self, x: &[f64]) -> Option<Result<Vec<f64>>> {
        match &self.evaluator {
            Evaluator::Posterior(model) => Some(model.class_posterior(x)),
            _ => None,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Exact Bayesian similarity of a known model.
pub fn exact_similarity(model: Arc<dyn ClassModel>) -> SimilarityOracle {
    SimilarityOracle {
        dimension: model.dimension(),
        evaluator: Evaluator::Posterior(model),
        provenance: Provenance::Exact,
    }
}

/// `1 - P(same | x, x')`.
pub fn similarity_distance(oracle: &SimilarityOracle, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    Ok(1.0 - oracle.evaluate(x, x_prime)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub same: bool,
}

/// Pairs of independent draws from `model`, labeled by whether their classes agree.
pub fn draw_pairs(model: &dyn ClassModel, seed: u64, count: usize) -> Vec<LabeledPair> {
    let shards: Vec<_> = rng::shards(count).collect();
    shards
        .into_par_iter()
        .map(|(k, range)| {
            let mut r = rng::stream(seed, Purpose::Pairs, k as u64);
            range
                .map(|_| {
                    let a = model.sample_one(&mut r);
                    let b = model.sample_one(&mut r);
                    LabeledPair {
                        same: a.label == b.label,
                        x: a.point,
                        x_prime: b.point,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Nadaraya–Watson regression of the same-indicator on the concatenated pair
/// vector with an isotropic Gaussian kernel, fit on both orderings of every pair.
#[derive(Debug, Clone)]
pub struct PairKernelRegression {
    dimension: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    inv_two_h2: f64,
}

impl PairKernelRegression {
    pub fn fit(pairs: &[LabeledPair], bandwidth: f64) -> Result<Self> {
        let first = pairs.first().ok_or(Error::NoTrainingPairs)?;
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidBandwidth(bandwidth));
        }
        let dimension = first.x.len();
        // each pair enters in both orders, which makes the fit symmetric
        let mut inputs = Vec::with_capacity(pairs.len() * 4 * dimension);
        let mut targets = Vec::with_capacity(2 * pairs.len());
        for p in pairs {
            check_dimension(dimension, p.x.len())?;
            check_dimension(dimension, p.x_prime.len())?;
            let y = if p.same { 1.0 } else { 0.0 };
            inputs.extend_from_slice(&p.x);
            inputs.extend_from_slice(&p.x_prime);
            inputs.extend_from_slice(&p.x_prime);
            inputs.extend_from_slice(&p.x);
            targets.extend([y, y]);
        }
        Ok(Self {
            dimension,
            inputs,
            targets,
            inv_two_h2: 1.0 / (2.0 * bandwidth * bandwidth),
        })
    }

    pub fn predict(&self, x: &[f64], x_prime: &[f64]) -> f64 {
        let width = 2 * self.dimension;
        let logs: Vec<f64> = self
            .inputs
            .chunks_exact(width)
            .map(|z| {
                let (a, b) = z.split_at(self.dimension);
                let d2: f64 = a
                    .iter()
                    .zip(x)
                    .chain(b.iter().zip(x_prime))
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum();
                -d2 * self.inv_two_h2
            })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (num, den) = logs
            .iter()
            .zip(&self.targets)
            .fold((0.0, 0.0), |(n, d), (l, y)| {
                let w = (l - max).exp();
                (n + w * y, d + w)
            });
        num / den
    }
}

/// Silverman-style bandwidth for a `d`-dimensional Gaussian kernel,
/// `σ·(4 / ((d + 2)·N))^(1/(d + 4))`, with `σ` the pooled standard deviation
/// of all pair coordinates.
pub fn silverman_bandwidth(pairs: &[LabeledPair]) -> Result<f64> {
    let first = pairs.first().ok_or(Error::NoTrainingPairs)?;
    let d = 2.0 * first.x.len() as f64;
    let values = pairs.iter().flat_map(|p| p.x.iter().chain(&p.x_prime));
    let count = pairs.len() as f64 * d;
    let mean = values.clone().sum::<f64>() / count;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0).max(1.0);
    let sigma = if var > 0.0 { var.sqrt() } else { 1.0 };
    Ok(sigma * (4.0 / ((d + 2.0) * pairs.len() as f64)).powf(1.0 / (d + 4.0)))
}

fn estimate_with(
    pairs: &[LabeledPair],
    bandwidth: Option<f64>,
    provenance: Provenance,
) -> Result<SimilarityOracle> {
    let h = match bandwidth {
        Some(h) => h,
        None => silverman_bandwidth(pairs)?,
    };
    let k = PairKernelRegression::fit(pairs, h)?;
    Ok(SimilarityOracle {
        dimension: k.dimension,
        evaluator: Evaluator::Kernel(Arc::new(k)),
        provenance,
    })
}

/// Kernel estimate of `P(same | x, x')` from labeled pairs. `None` picks
/// [`silverman_bandwidth`].
pub fn estimate_similarity(
    pairs: &[LabeledPair],
    bandwidth: Option<f64>,
) -> Result<SimilarityOracle> {
    estimate_with(pairs, bandwidth, Provenance::PairEstimated)
}

/// Same estimator, for pairs taken from within batches of a hierarchical model.
pub fn estimate_batched_similarity(
    pairs: &[LabeledPair],
    bandwidth: Option<f64>,
) -> Result<SimilarityOracle> {
    estimate_with(pairs, bandwidth, Provenance::BatchedEstimated)
}
