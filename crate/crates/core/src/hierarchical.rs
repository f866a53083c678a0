//! Batched hierarchical classification.
//!
//! A [`BatchedModel`] is a finite family of classification problems indexed
//! by a task parameter `θ` with prior `P(θ)`. Every sample in a batch shares
//! one `θ`, so within-batch quantities are sums over `θ` of products across
//! the batch, and these do not factor into per-sample marginals.

use std::sync::Arc;

use itertools::Itertools;
use rand::RngCore;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::classify::argmax;
use crate::error::{Error, Result};
use crate::generative::{
    check_dimension, log_sum_exp, normalize_log_weights, sample_categorical, validate_distribution,
    ClassModel, DiscreteClassModel, LabeledSample, MixtureClassModel,
};
use crate::rng::{self, Purpose};
use crate::similarity::{dot, exact_similarity, LabeledPair, Provenance, SimilarityOracle};

#[derive(Debug, Clone)]
pub struct BatchedModel {
    theta_prior: Vec<f64>,
    conditionals: Vec<Arc<dyn ClassModel>>,
    batch_size: usize,
}

impl BatchedModel {
    pub fn new(
        theta_prior: Vec<f64>,
        conditionals: Vec<Arc<dyn ClassModel>>,
        batch_size: usize,
    ) -> Result<Self> {
        validate_distribution(&theta_prior, "task prior", false)?;
        if theta_prior.len() != conditionals.len() {
            return Err(Error::InvalidModel(
                "one conditional model per task parameter required".into(),
            ));
        }
        if batch_size < 2 {
            return Err(Error::InvalidModel("batch size must be at least 2".into()));
        }
        let first = &conditionals[0];
        if conditionals
            .iter()
            .any(|m| m.class_count() != first.class_count() || m.dimension() != first.dimension())
        {
            return Err(Error::InvalidModel(
                "conditionals differ in class count or dimension".into(),
            ));
        }
        Ok(Self {
            theta_prior,
            conditionals,
            batch_size,
        })
    }

    /// Two equally likely tasks on one feature value: every label is 0 under
    /// the first task and 1 under the second. Within a batch all labels agree,
    /// while each single observation is a fair coin.
    pub fn label_flip_counterexample() -> Self {
        let support = vec![vec![0.0]];
        let a =
            DiscreteClassModel::new(support.clone(), vec![vec![1.0], vec![0.0]]).expect("valid");
        let b = DiscreteClassModel::new(support, vec![vec![0.0], vec![1.0]]).expect("valid");
        Self::new(vec![0.5, 0.5], vec![Arc::new(a), Arc::new(b)], 2).expect("valid")
    }

    /// Unit-variance 1-D classes at `-1 + θ` and `+1 + θ`, `θ = ±shift` with equal probability.
    pub fn shifted_gaussian_pair(shift: f64, batch_size: usize) -> Result<Self> {
        let make = |t: f64| -> Result<Arc<dyn ClassModel>> {
            Ok(Arc::new(MixtureClassModel::two_gaussians(
                -1.0 + t,
                1.0 + t,
                1.0,
                0.5,
            )?))
        };
        Self::new(
            vec![0.5, 0.5],
            vec![make(-shift)?, make(shift)?],
            batch_size,
        )
    }

    /// Random finite-support model on `{0, 1, .., support_size - 1}`: task
    /// prior and every joint table are normalized exponential draws.
    pub fn random_discrete(
        seed: u64,
        theta_count: usize,
        support_size: usize,
        class_count: usize,
        batch_size: usize,
    ) -> Result<Self> {
        Self::random_tables(
            seed,
            theta_count,
            support_size,
            class_count,
            batch_size,
            false,
        )
    }

    /// As [`BatchedModel::random_discrete`], but `P(x | θ)` is the same for
    /// every task; only the labeling `P(ω | x, θ)` changes with `θ`.
    pub fn random_label_tasks(
        seed: u64,
        theta_count: usize,
        support_size: usize,
        class_count: usize,
        batch_size: usize,
    ) -> Result<Self> {
        Self::random_tables(
            seed,
            theta_count,
            support_size,
            class_count,
            batch_size,
            true,
        )
    }

    fn random_tables(
        seed: u64,
        theta_count: usize,
        support_size: usize,
        class_count: usize,
        batch_size: usize,
        shared_features: bool,
    ) -> Result<Self> {
        if theta_count == 0 || support_size == 0 || class_count == 0 {
            return Err(Error::InvalidArgument(
                "random model sizes must be positive".into(),
            ));
        }
        let mut r = rng::stream(seed, Purpose::Instances, 0);
        let mut simplex = |n: usize| -> Vec<f64> {
            let v: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut r)).collect();
            let total: f64 = v.iter().sum();
            v.into_iter().map(|a| a / total).collect()
        };
        let support = DiscreteClassModel::scalar_support(
            &(0..support_size).map(|i| i as f64).collect::<Vec<_>>(),
        );
        let features = simplex(support_size);
        let mut conditionals: Vec<Arc<dyn ClassModel>> = Vec::with_capacity(theta_count);
        for _ in 0..theta_count {
            let mut joint = vec![vec![0.0; support_size]; class_count];
            if shared_features {
                for (k, q) in features.iter().enumerate() {
                    for (c, p) in simplex(class_count).into_iter().enumerate() {
                        joint[c][k] = q * p;
                    }
                }
            } else {
                for (i, p) in simplex(class_count * support_size).into_iter().enumerate() {
                    joint[i / support_size][i % support_size] = p;
                }
            }
            conditionals.push(Arc::new(DiscreteClassModel::new(support.clone(), joint)?));
        }
        Self::new(simplex(theta_count), conditionals, batch_size)
    }

    pub fn theta_prior(&self) -> &[f64] {
        &self.theta_prior
    }

    pub fn conditional(&self, theta: usize) -> &Arc<dyn ClassModel> {
        &self.conditionals[theta]
    }

    pub fn theta_count(&self) -> usize {
        self.theta_prior.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn class_count(&self) -> usize {
        self.conditionals[0].class_count()
    }

    pub fn dimension(&self) -> usize {
        self.conditionals[0].dimension()
    }

    fn thetas(&self) -> impl Iterator<Item = (f64, &Arc<dyn ClassModel>)> + '_ {
        self.theta_prior
            .iter()
            .copied()
            .zip(&self.conditionals)
            .filter(|(p, _)| *p > 0.0)
    }

    /// The non-batched model `P(ω, x) = Σ_θ P(θ) P(ω, x | θ)`.
    pub fn marginal_model(&self) -> MarginalModel {
        let c = self.class_count();
        let priors = (0..c)
            .map(|k| self.thetas().map(|(p, m)| p * m.priors()[k]).sum())
            .collect();
        let support = self
            .conditionals
            .iter()
            .map(|m| m.support().map(<[Vec<f64>]>::to_vec))
            .collect::<Option<Vec<_>>>()
            .map(|sets| {
                let mut all: Vec<Vec<f64>> = Vec::new();
                for p in sets.into_iter().flatten() {
                    if !all.contains(&p) {
                        all.push(p);
                    }
                }
                all
            });
        MarginalModel {
            model: self.clone(),
            priors,
            support,
        }
    }
}

/// The batched model seen one sample at a time, with `θ` integrated out.
#[derive(Debug, Clone)]
pub struct MarginalModel {
    model: BatchedModel,
    priors: Vec<f64>,
    support: Option<Vec<Vec<f64>>>,
}

impl ClassModel for MarginalModel {
    fn class_count(&self) -> usize {
        self.model.class_count()
    }

    fn dimension(&self) -> usize {
        self.model.dimension()
    }

    fn priors(&self) -> &[f64] {
        &self.priors
    }

    fn log_joint(&self, class: usize, x: &[f64]) -> f64 {
        log_sum_exp(
            self.model
                .thetas()
                .map(|(p, m)| p.ln() + m.log_joint(class, x)),
        )
    }

    fn sample_point(&self, class: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        // P(θ | ω) ∝ P(θ) P(ω | θ)
        let weights: Vec<f64> = self
            .model
            .theta_prior
            .iter()
            .zip(&self.model.conditionals)
            .map(|(p, m)| p * m.priors()[class] / self.priors[class])
            .collect();
        let t = sample_categorical(&weights, rng);
        self.model.conditionals[t].sample_point(class, rng)
    }

    fn support(&self) -> Option<&[Vec<f64>]> {
        self.support.as_deref()
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dimension();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for m in &self.model.conditionals {
            let (l, h) = m.bounding_box();
            for k in 0..d {
                lo[k] = lo[k].min(l[k]);
                hi[k] = hi[k].max(h[k]);
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Hidden task parameter; exposed for tests and diagnostics only.
    pub theta_index: usize,
    pub samples: Vec<LabeledSample>,
}

/// Batch `b` draws `θ` and then `batch_size` samples from stream `(seed, b)`.
pub fn sample_batches(model: &BatchedModel, seed: u64, batch_count: usize) -> Vec<Batch> {
    (0..batch_count)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, Purpose::Batches, b as u64);
            let theta_index = sample_categorical(&model.theta_prior, &mut r);
            let m = &model.conditionals[theta_index];
            Batch {
                theta_index,
                samples: (0..model.batch_size)
                    .map(|_| m.sample_one(&mut r))
                    .collect(),
            }
        })
        .collect()
}

fn check_class(model: &BatchedModel, class: usize) -> Result<()> {
    if class >= model.class_count() {
        return Err(Error::InvalidArgument(format!(
            "class {class} out of range"
        )));
    }
    Ok(())
}

/// `P(x | ω) = Σ_θ P(x | ω, θ) P(θ)`, computed as `P(ω, x) / P(ω)` so that
/// tasks in which `ω` never occurs do not contribute.
pub fn marginal_class_conditional(model: &BatchedModel, class: usize, x: &[f64]) -> Result<f64> {
    check_class(model, class)?;
    check_dimension(model.dimension(), x.len())?;
    let prior: f64 = model.thetas().map(|(p, m)| p * m.priors()[class]).sum();
    if prior == 0.0 {
        return Err(Error::ImpossibleLabels);
    }
    let joint: f64 = model.thetas().map(|(p, m)| p * m.joint(class, x)).sum();
    Ok(joint / prior)
}

fn check_batch(model: &BatchedModel, labels: &[usize], points: &[Vec<f64>]) -> Result<()> {
    if labels.len() != points.len() {
        return Err(Error::InvalidArgument(
            "labels and points differ in length".into(),
        ));
    }
    for (&l, x) in labels.iter().zip(points) {
        check_class(model, l)?;
        check_dimension(model.dimension(), x.len())?;
    }
    Ok(())
}

/// `Σ_θ P(θ) Π_i P(ω_i, x_i | θ)`: joint probability of a whole labeled batch.
pub fn batch_joint(model: &BatchedModel, labels: &[usize], points: &[Vec<f64>]) -> Result<f64> {
    check_batch(model, labels, points)?;
    Ok(model
        .thetas()
        .map(|(p, m)| {
            p * labels
                .iter()
                .zip(points)
                .map(|(&l, x)| m.joint(l, x))
                .product::<f64>()
        })
        .sum())
}

/// `Π_i P(ω_i, x_i)`: the same batch treated as independent draws from the marginal model.
pub fn independent_joint(
    model: &BatchedModel,
    labels: &[usize],
    points: &[Vec<f64>],
) -> Result<f64> {
    check_batch(model, labels, points)?;
    let marginal = model.marginal_model();
    Ok(labels
        .iter()
        .zip(points)
        .map(|(&l, x)| marginal.joint(l, x))
        .product())
}

/// Class-conditional density of a batch, `P(x_1..m | ω_1..m)`, which reduces
/// to `Σ_θ Π_i P(x_i|ω_i, θ) P(θ)` when class priors do not depend on `θ`.
pub fn batch_class_conditional(
    model: &BatchedModel,
    labels: &[usize],
    points: &[Vec<f64>],
) -> Result<f64> {
    let joint = batch_joint(model, labels, points)?;
    let label_prob: f64 = model
        .thetas()
        .map(|(p, m)| p * labels.iter().map(|&l| m.priors()[l]).product::<f64>())
        .sum();
    if label_prob == 0.0 {
        return Err(Error::ImpossibleLabels);
    }
    Ok(joint / label_prob)
}

/// `Π_i P(x_i | ω_i)`: the non-batched class-conditional density of the same batch.
pub fn independent_class_conditional(
    model: &BatchedModel,
    labels: &[usize],
    points: &[Vec<f64>],
) -> Result<f64> {
    check_batch(model, labels, points)?;
    labels
        .iter()
        .zip(points)
        .map(|(&l, x)| marginal_class_conditional(model, l, x))
        .product()
}

/// Probability that two feature vectors from the same batch carry the same label:
/// `Σ_θ P(θ | x, x') Σ_i P(ω=i | x, θ) P(ω=i | x', θ)`.
pub fn batched_similarity(model: &BatchedModel, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    check_dimension(model.dimension(), x.len())?;
    check_dimension(model.dimension(), x_prime.len())?;
    let logs: Vec<f64> = model
        .conditionals
        .iter()
        .zip(&model.theta_prior)
        .map(|(m, p)| p.ln() + m.density(x).ln() + m.density(x_prime).ln())
        .collect();
    let weights = normalize_log_weights(&logs).ok_or(Error::UnsupportedPoint)?;
    let mut total = 0.0;
    for (w, m) in weights.iter().zip(&model.conditionals) {
        if *w > 0.0 {
            total += w * dot(&m.class_posterior(x)?, &m.class_posterior(x_prime)?);
        }
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `Σ_i P(ω=i | x) P(ω=i | x')` from the marginal (θ-integrated) posteriors.
pub fn marginal_similarity(model: &BatchedModel, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    let marginal = model.marginal_model();
    Ok(dot(
        &marginal.class_posterior(x)?,
        &marginal.class_posterior(x_prime)?,
    ))
}

/// How far the batched similarity is from the factorized marginal form.
pub fn factorization_gap(model: &BatchedModel, x: &[f64], x_prime: &[f64]) -> Result<f64> {
    Ok((batched_similarity(model, x, x_prime)? - marginal_similarity(model, x, x_prime)?).abs())
}

/// Exact batched similarity as an oracle.
pub fn batched_oracle(model: Arc<BatchedModel>) -> SimilarityOracle {
    let dimension = model.dimension();
    SimilarityOracle::from_fn(dimension, Provenance::Exact, move |x, y| {
        batched_similarity(&model, x, y)
    })
}

/// Exact similarity of the marginal model, ignoring batch structure.
pub fn marginal_oracle(model: &BatchedModel) -> SimilarityOracle {
    exact_similarity(Arc::new(model.marginal_model()))
}

/// Every within-batch pair `(i < j)`, labeled same/different. This is the
/// training stream for a batch-trained similarity estimate.
pub fn batched_training_pairs(batches: &[Batch]) -> Vec<LabeledPair> {
    batches
        .iter()
        .flat_map(|b| {
            b.samples
                .iter()
                .tuple_combinations()
                .map(|(a, c)| LabeledPair {
                    x: a.point.clone(),
                    x_prime: c.point.clone(),
                    same: a.label == c.label,
                })
        })
        .collect()
}

fn nearest_label<D>(labeled: &[LabeledSample], query: &[f64], distance: &D) -> Result<usize>
where
    D: Fn(&[f64], &[f64]) -> Result<f64>,
{
    if labeled.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let distances = labeled
        .iter()
        .map(|s| distance(query, &s.point))
        .collect::<Result<Vec<_>>>()?;
    let neg: Vec<f64> = distances.iter().map(|d| -d).collect();
    Ok(labeled[argmax(&neg)].label)
}

/// 1-NN inside one batch under `1 - s(query, x_i)`.
pub fn batched_nn_classify(
    oracle: &SimilarityOracle,
    labeled: &[LabeledSample],
    query: &[f64],
) -> Result<usize> {
    nearest_label(labeled, query, &|a: &[f64], b: &[f64]| {
        Ok(1.0 - oracle.evaluate(a, b)?)
    })
}

/// A fallible distance between two points.
pub type Distance<'a> = &'a (dyn Fn(&[f64], &[f64]) -> Result<f64> + Sync);

/// Leave-one-out within-batch 1-NN error of each distance, one row per
/// distance and one entry per batch (fraction of the batch misclassified).
pub fn batch_nn_error_rates(
    batches: &[Batch],
    distances: &[Distance<'_>],
) -> Result<Vec<Vec<f64>>> {
    distances
        .iter()
        .map(|d| {
            batches
                .par_iter()
                .map(|b| {
                    let m = b.samples.len();
                    let mut wrong = 0usize;
                    for q in 0..m {
                        let rest: Vec<LabeledSample> = b
                            .samples
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != q)
                            .map(|(_, s)| s.clone())
                            .collect();
                        if nearest_label(&rest, &b.samples[q].point, d)? != b.samples[q].label {
                            wrong += 1;
                        }
                    }
                    Ok(wrong as f64 / m as f64)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect()
}

/// Probability, over the full generative process, that the within-batch 1-NN
/// of a query under `distance` carries a different label than the query.
/// The batch holds `labeled_count` labeled samples plus the query; ties go to
/// the lowest labeled index. Requires every conditional to have finite support.
pub fn expected_batch_nn_disagreement<D>(
    model: &BatchedModel,
    labeled_count: usize,
    distance: D,
) -> Result<f64>
where
    D: Fn(&[f64], &[f64]) -> Result<f64>,
{
    if labeled_count == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let mut total = 0.0;
    for (p_theta, m) in model.thetas() {
        let support = m.support().ok_or_else(|| {
            Error::InvalidArgument("exact enumeration needs finite-support conditionals".into())
        })?;
        let outcomes: Vec<(usize, &Vec<f64>, f64)> = (0..m.class_count())
            .flat_map(|c| support.iter().map(move |x| (c, x)))
            .map(|(c, x)| (c, x, m.joint(c, x)))
            .filter(|o| o.2 > 0.0)
            .collect();
        for slots in (0..=labeled_count)
            .map(|_| outcomes.iter())
            .multi_cartesian_product()
        {
            let (query, labeled) = slots.split_last().expect("at least two slots");
            let prob: f64 = p_theta * slots.iter().map(|o| o.2).product::<f64>();
            let mut best = (0usize, f64::INFINITY);
            for (j, o) in labeled.iter().enumerate() {
                let d = distance(query.1, o.1)?;
                if d < best.1 {
                    best = (j, d);
                }
            }
            if labeled[best.0].0 != query.0 {
                total += prob;
            }
        }
    }
    Ok(total)
}
