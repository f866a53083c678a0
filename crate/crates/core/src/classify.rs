//! Decision rules built from posteriors or similarity oracles, and their risk.
//!
//! Every rule breaks ties toward the lowest class (or training) index.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generative::{sample, ClassModel, EvalGrid, LabeledSample};
use crate::reconstruction::{
    reconstruct_two_class, Branch, TwoClassOptions, TwoClassReconstruction,
};
use crate::rng::{self, Purpose};
use crate::similarity::{dot, SimilarityOracle};

pub const TIE_RULE: &str = "lowest-index";

type DecideFn = dyn Fn(&[f64]) -> Result<usize> + Send + Sync;

#[derive(Clone)]
pub struct Classifier {
    name: String,
    rule: Arc<DecideFn>,
}

impl fmt::Debug for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Classifier")
            .field("name", &self.name)
            .finish()
    }
}

impl Classifier {
    pub fn new<F>(name: impl Into<String>, rule: F) -> Self
    where
        F: Fn(&[f64]) -> Result<usize> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            rule: Arc::new(rule),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn decide(&self, x: &[f64]) -> Result<usize> {
        (self.rule)(x)
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn argmin(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// `argmax_ω posterior(x)`.
pub fn bayes_classifier<F>(posterior: F) -> Classifier
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
{
    Classifier::new("bayes", move |x| Ok(argmax(&posterior(x)?)))
}

/// Bayes rule of a known model.
pub fn model_bayes_classifier(model: Arc<dyn ClassModel>) -> Classifier {
    bayes_classifier(move |x| model.class_posterior(x))
}

/// `argmax_ω s(x, prototype_ω)` with one prototype per class.
pub fn prototype_classifier(
    oracle: SimilarityOracle,
    prototypes: &BTreeMap<usize, Vec<f64>>,
    class_count: usize,
) -> Result<Classifier> {
    let points = (0..class_count)
        .map(|c| {
            prototypes
                .get(&c)
                .cloned()
                .ok_or(Error::IncompletePrototypeSet(c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Classifier::new("prototype", move |x| {
        let scores = points
            .iter()
            .map(|p| oracle.evaluate(x, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(argmax(&scores))
    }))
}

/// 1-NN under the similarity distance `1 - s(x, x_i)`.
///
/// For exact oracles the training posteriors are computed once, so each
/// query costs one posterior evaluation plus inner products.
pub fn nn_classifier(oracle: SimilarityOracle, training: Vec<LabeledSample>) -> Result<Classifier> {
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let embedded = training
        .iter()
        .map(|s| oracle.embedding(&s.point))
        .collect::<Option<Result<Vec<_>>>>()
        .transpose()?;
    let labels: Vec<usize> = training.iter().map(|s| s.label).collect();
    match embedded {
        Some(table) => Ok(Classifier::new("similarity-1nn", move |x| {
            let q = oracle.embedding(x).expect("exact oracle")?;
            let j = argmin(table.iter().map(|p| 1.0 - dot(&q, p))).expect("nonempty");
            Ok(labels[j])
        })),
        None => Ok(Classifier::new("similarity-1nn", move |x| {
            let distances = training
                .iter()
                .map(|s| Ok(1.0 - oracle.evaluate(x, &s.point)?))
                .collect::<Result<Vec<_>>>()?;
            Ok(labels[argmin(distances).expect("nonempty")])
        })),
    }
}

/// 1-NN under an arbitrary distance.
pub fn nn_classifier_with_distance<D>(
    name: &str,
    training: Vec<LabeledSample>,
    distance: D,
) -> Result<Classifier>
where
    D: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
{
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    Ok(Classifier::new(name, move |x| {
        let j = argmin(training.iter().map(|s| distance(x, &s.point))).expect("nonempty");
        Ok(training[j].label)
    }))
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// `|⟨w, x - x'⟩|` for a unit direction `w` drawn from `seed`.
pub fn random_projection_distance(
    dimension: usize,
    seed: u64,
) -> impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + Clone {
    let mut r = rng::stream(seed, Purpose::Classifier, 0);
    let mut w: Vec<f64> = (0..dimension)
        .map(|_| StandardNormal.sample(&mut r))
        .collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    w.iter_mut().for_each(|v| *v /= norm);
    move |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .zip(&w)
            .map(|((u, v), wi)| wi * (u - v))
            .sum::<f64>()
            .abs()
    }
}

/// Bayes rule on a reconstructed posterior; off-grid queries use the nearest grid point.
pub fn classifier_from_reconstruction(
    reconstruction: &TwoClassReconstruction,
) -> Result<Classifier> {
    if reconstruction.branch == Branch::Undecided {
        return Err(Error::BranchUnresolved);
    }
    let grid = reconstruction.grid.clone();
    let posterior = reconstruction
        .posterior
        .clone()
        .ok_or(Error::BranchUnresolved)?;
    let inner = bayes_classifier(move |x| {
        let p0 = posterior[grid.nearest(x)];
        Ok(vec![p0, 1.0 - p0])
    });
    Ok(Classifier::new("reconstructed", move |x| inner.decide(x)))
}

pub fn reconstructed_classifier(
    oracle: &SimilarityOracle,
    grid: &EvalGrid,
    samples: &[LabeledSample],
) -> Result<Classifier> {
    let r = reconstruct_two_class(oracle, grid, samples, TwoClassOptions::for_oracle(oracle))?;
    classifier_from_reconstruction(&r)
}

/// Uniform guess derived from a hash of the query's coordinates.
pub fn random_guess_classifier(class_count: usize, seed: u64) -> Classifier {
    Classifier::new("random-guess", move |x| {
        let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
        for v in x {
            h = splitmix(h ^ v.to_bits());
        }
        Ok((h % class_count as u64) as usize)
    })
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskMethod {
    Quadrature,
    MonteCarlo,
}

impl RiskMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskMethod::Quadrature => "quadrature",
            RiskMethod::MonteCarlo => "monte-carlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub classifier_name: String,
    pub error_rate: f64,
    pub stderr: f64,
    pub method: RiskMethod,
    pub sample_count: usize,
    pub tie_rule: &'static str,
}

#[derive(Debug, Clone, Copy)]
pub enum RiskEvaluation<'a> {
    Quadrature(&'a EvalGrid),
    MonteCarlo { seed: u64, count: usize },
}

/// Misclassification probability, integrated on a grid or estimated from
/// fresh samples. Monte-Carlo test points are sharded by index.
pub fn evaluate_risk(
    classifier: &Classifier,
    model: &dyn ClassModel,
    evaluation: RiskEvaluation<'_>,
) -> Result<RiskReport> {
    match evaluation {
        RiskEvaluation::Quadrature(grid) => {
            grid.check_coverage(model)?;
            let parts = grid
                .points()
                .par_iter()
                .zip(grid.weights())
                .map(|(x, w)| {
                    let d = classifier.decide(x)?;
                    let wrong = model.density(x)
                        - if d < model.class_count() {
                            model.joint(d, x)
                        } else {
                            0.0
                        };
                    Ok(w * wrong)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(RiskReport {
                classifier_name: classifier.name().to_string(),
                error_rate: parts.iter().sum::<f64>().clamp(0.0, 1.0),
                stderr: 0.0,
                method: RiskMethod::Quadrature,
                sample_count: grid.len(),
                tie_rule: TIE_RULE,
            })
        }
        RiskEvaluation::MonteCarlo { seed, count } => {
            if count == 0 {
                return Err(Error::InvalidArgument(
                    "Monte-Carlo risk needs at least one test sample".into(),
                ));
            }
            let test = sample(model, seed, count);
            let errors: usize = test
                .par_iter()
                .map(|s| Ok(usize::from(classifier.decide(&s.point)? != s.label)))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .sum();
            let e = errors as f64 / count as f64;
            Ok(RiskReport {
                classifier_name: classifier.name().to_string(),
                error_rate: e,
                stderr: (e * (1.0 - e) / count as f64).sqrt(),
                method: RiskMethod::MonteCarlo,
                sample_count: count,
                tie_rule: TIE_RULE,
            })
        }
    }
}

/// Per-sample error indicators of several classifiers on the same test set,
/// for paired comparisons.
pub fn paired_errors(
    classifiers: &[&Classifier],
    test: &[LabeledSample],
) -> Result<Vec<Vec<bool>>> {
    classifiers
        .iter()
        .map(|c| {
            test.par_iter()
                .map(|s| Ok(c.decide(&s.point)? != s.label))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Mean and standard error of the per-sample difference `a - b` of error indicators.
pub fn paired_difference(a: &[bool], b: &[bool]) -> (f64, f64) {
    let to_f64 = |v: &[bool]| {
        v.iter()
            .map(|&e| f64::from(u8::from(e)))
            .collect::<Vec<_>>()
    };
    paired_mean_difference(&to_f64(a), &to_f64(b))
}

/// Mean and standard error of `a_i - b_i` over paired observations.
pub fn paired_mean_difference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// `E_x[P(ω ≠ ω_j(x) | x, x_j(x))]` where `j(x)` is the training point nearest
/// to `x` under `distance` and the neighbor's label is drawn from the model's
/// posterior at that point.
pub fn expected_neighbor_disagreement<D>(
    model: &dyn ClassModel,
    grid: &EvalGrid,
    training: &[Vec<f64>],
    distance: D,
) -> Result<f64>
where
    D: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    grid.check_coverage(model)?;
    let train_post = training
        .iter()
        .map(|t| model.class_posterior(t))
        .collect::<Result<Vec<_>>>()?;
    let parts = grid
        .points()
        .par_iter()
        .zip(grid.weights())
        .map(|(x, w)| {
            let density = model.density(x);
            if density == 0.0 {
                return Ok(0.0);
            }
            let j = argmin(training.iter().map(|t| distance(x, t))).expect("nonempty");
            let p = model.class_posterior(x)?;
            Ok(w * density * (1.0 - dot(&p, &train_post[j])))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(parts.iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{Component, DiscreteClassModel, MixtureClassModel};
    use crate::similarity::exact_similarity;
    use approx::assert_abs_diff_eq;

    fn unit_pair() -> Arc<dyn ClassModel> {
        Arc::new(MixtureClassModel::symmetric_unit_pair())
    }

    #[test]
    fn argmax_ties_to_lowest() {
        let c = bayes_classifier(|x: &[f64]| Ok(vec![x[0], 1.0 - x[0]]));
        assert_eq!(c.decide(&[0.7]).unwrap(), 0);
        assert_eq!(c.decide(&[0.5]).unwrap(), 0);
        assert_eq!(c.decide(&[0.2]).unwrap(), 1);
    }

    #[test]
    fn unit_pair_boundary_at_zero() {
        let c = model_bayes_classifier(unit_pair());
        let grid = EvalGrid::for_model(unit_pair().as_ref(), 141).unwrap();
        for x in grid.points() {
            let expected = if x[0] <= 0.0 { 0 } else { 1 };
            assert_eq!(c.decide(x).unwrap(), expected, "x = {}", x[0]);
        }
    }

    #[test]
    fn pure_prototypes_reproduce_bayes() {
        // the prototypes sit far enough out that their posteriors are 1 to double precision
        let m = unit_pair();
        let protos = BTreeMap::from([(0, vec![-40.0]), (1, vec![40.0])]);
        assert_eq!(m.class_posterior(&[-40.0]).unwrap()[0], 1.0);
        let pc = prototype_classifier(exact_similarity(m.clone()), &protos, 2).unwrap();
        let bc = model_bayes_classifier(m.clone());
        let grid = EvalGrid::for_model(m.as_ref(), 201).unwrap();
        for x in grid.points() {
            assert_eq!(pc.decide(x).unwrap(), bc.decide(x).unwrap());
        }
        assert_eq!(pc.decide(&[-40.0]).unwrap(), 0);
    }

    #[test]
    fn ambiguous_prototypes() {
        // posteriors: a=(0.6,0.4), b=(0.4,0.6), q=(0.9,0.1)
        let m = DiscreteClassModel::new(
            DiscreteClassModel::scalar_support(&[0.0, 1.0, 2.0]),
            vec![vec![0.18, 0.12, 0.36], vec![0.12, 0.18, 0.04]],
        )
        .unwrap();
        let o = exact_similarity(Arc::new(m));
        assert_abs_diff_eq!(o.evaluate(&[2.0], &[0.0]).unwrap(), 0.58, epsilon = 1e-12);
        assert_abs_diff_eq!(o.evaluate(&[2.0], &[1.0]).unwrap(), 0.42, epsilon = 1e-12);
        let pc =
            prototype_classifier(o, &BTreeMap::from([(0, vec![0.0]), (1, vec![1.0])]), 2).unwrap();
        assert_eq!(pc.decide(&[2.0]).unwrap(), 0);
    }

    #[test]
    fn missing_prototype() {
        let o = exact_similarity(unit_pair());
        let err = prototype_classifier(o, &BTreeMap::from([(0, vec![0.0])]), 2).unwrap_err();
        assert!(matches!(err, Error::IncompletePrototypeSet(1)));
    }

    #[test]
    fn nn_edge_cases() {
        let o = exact_similarity(unit_pair());
        assert!(matches!(
            nn_classifier(o.clone(), vec![]),
            Err(Error::EmptyTrainingSet)
        ));
        let c = nn_classifier(o.clone(), vec![LabeledSample::new(1, vec![0.3])]).unwrap();
        for x in [-5.0, 0.0, 5.0] {
            assert_eq!(c.decide(&[x]).unwrap(), 1);
        }
        let disjoint = DiscreteClassModel::new(
            DiscreteClassModel::scalar_support(&[0.0, 1.0]),
            vec![vec![0.5, 0.0], vec![0.0, 0.5]],
        )
        .unwrap();
        let o = exact_similarity(Arc::new(disjoint));
        let c = nn_classifier(
            o,
            vec![
                LabeledSample::new(0, vec![0.0]),
                LabeledSample::new(1, vec![1.0]),
            ],
        )
        .unwrap();
        assert_eq!(c.decide(&[1.0]).unwrap(), 1);
        assert_eq!(c.decide(&[0.0]).unwrap(), 0);
    }

    #[test]
    fn nn_paths_agree() {
        let m = unit_pair();
        let o = exact_similarity(m.clone());
        let training = sample(m.as_ref(), 4, 50);
        let fast = nn_classifier(o.clone(), training.clone()).unwrap();
        let slow = nn_classifier(
            SimilarityOracle::from_fn(
                1,
                crate::similarity::Provenance::PairEstimated,
                move |a, b| o.evaluate(a, b),
            ),
            training,
        )
        .unwrap();
        for s in sample(m.as_ref(), 5, 200) {
            assert_eq!(
                fast.decide(&s.point).unwrap(),
                slow.decide(&s.point).unwrap()
            );
        }
    }

    #[test]
    fn reconstructed_matches_bayes_and_flips() {
        let m = unit_pair();
        let grid = EvalGrid::for_model(m.as_ref(), 81).unwrap();
        let o = exact_similarity(m.clone());
        let samples = sample(m.as_ref(), 3, 200);
        let rc = reconstructed_classifier(&o, &grid, &samples).unwrap();
        let bc = model_bayes_classifier(m.clone());
        let flipped: Vec<_> = samples
            .iter()
            .map(|s| LabeledSample::new(1 - s.label, s.point.clone()))
            .collect();
        let fc = reconstructed_classifier(&o, &grid, &flipped).unwrap();
        for x in grid.points() {
            let b = bc.decide(x).unwrap();
            assert_eq!(rc.decide(x).unwrap(), b);
            if x[0] != 0.0 {
                assert_eq!(fc.decide(x).unwrap(), 1 - b);
            }
        }
        assert!(matches!(
            reconstructed_classifier(&o, &grid, &[]),
            Err(Error::BranchUnresolved)
        ));
    }

    #[test]
    fn reconstructed_one_class_is_constant() {
        let m: Arc<dyn ClassModel> = Arc::new(
            MixtureClassModel::new(
                vec![1.0],
                vec![vec![Component::isotropic(1.0, vec![0.0], 1.0)]],
            )
            .unwrap(),
        );
        let grid = EvalGrid::for_model(m.as_ref(), 31).unwrap();
        let rc = reconstructed_classifier(
            &exact_similarity(m.clone()),
            &grid,
            &sample(m.as_ref(), 1, 5),
        )
        .unwrap();
        assert!(grid.points().iter().all(|x| rc.decide(x).unwrap() == 0));
    }

    #[test]
    fn risk_of_separable_and_random_rules() {
        let disjoint = DiscreteClassModel::new(
            DiscreteClassModel::scalar_support(&[0.0, 1.0]),
            vec![vec![0.5, 0.0], vec![0.0, 0.5]],
        )
        .unwrap();
        let grid = EvalGrid::for_model(&disjoint, 0).unwrap();
        let r = evaluate_risk(
            &model_bayes_classifier(Arc::new(disjoint.clone())),
            &disjoint,
            RiskEvaluation::Quadrature(&grid),
        )
        .unwrap();
        assert_eq!((r.error_rate, r.stderr), (0.0, 0.0));

        let m = unit_pair();
        let r = evaluate_risk(
            &random_guess_classifier(2, 8),
            m.as_ref(),
            RiskEvaluation::MonteCarlo {
                seed: 21,
                count: 20_000,
            },
        )
        .unwrap();
        assert!((r.error_rate - 0.5).abs() <= 3.0 * r.stderr, "{r:?}");
        assert_eq!(r.method, RiskMethod::MonteCarlo);
    }

    #[test]
    fn bayes_quadrature_risk_matches_bayes_risk() {
        let m = unit_pair();
        let grid = EvalGrid::for_model(m.as_ref(), 2001).unwrap();
        let r = evaluate_risk(
            &model_bayes_classifier(m.clone()),
            m.as_ref(),
            RiskEvaluation::Quadrature(&grid),
        )
        .unwrap();
        assert_abs_diff_eq!(
            r.error_rate,
            crate::generative::bayes_risk(m.as_ref(), &grid).unwrap(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(r.error_rate, 0.158_655_253_931_457, epsilon = 5e-4);
    }

    #[test]
    fn classifiers_are_permutation_covariant() {
        let base = MixtureClassModel::new(
            vec![0.3, 0.3, 0.4],
            vec![
                vec![Component::isotropic(1.0, vec![-2.0], 1.0)],
                vec![Component::isotropic(1.0, vec![0.0], 0.5)],
                vec![Component::isotropic(1.0, vec![2.0], 1.5)],
            ],
        )
        .unwrap();
        let perm = [2, 0, 1];
        let permuted = base.permute_classes(&perm).unwrap();
        let a = model_bayes_classifier(Arc::new(base.clone()));
        let b = model_bayes_classifier(Arc::new(permuted.clone()));
        let training = sample(&base, 6, 40);
        let relabeled: Vec<_> = training
            .iter()
            .map(|s| LabeledSample::new(perm[s.label], s.point.clone()))
            .collect();
        let na = nn_classifier(exact_similarity(Arc::new(base)), training).unwrap();
        let nb = nn_classifier(exact_similarity(Arc::new(permuted)), relabeled).unwrap();
        for i in 0..121 {
            let x = [-6.0 + 0.1 * i as f64];
            assert_eq!(perm[a.decide(&x).unwrap()], b.decide(&x).unwrap());
            assert_eq!(perm[na.decide(&x).unwrap()], nb.decide(&x).unwrap());
        }
    }

    #[test]
    fn bayesian_similarity_minimizes_neighbor_disagreement() {
        let m = unit_pair();
        let grid = EvalGrid::for_model(m.as_ref(), 401).unwrap();
        let training: Vec<Vec<f64>> = sample(m.as_ref(), 12, 30)
            .into_iter()
            .map(|s| s.point)
            .collect();
        let o = exact_similarity(m.clone());
        let bsim = expected_neighbor_disagreement(m.as_ref(), &grid, &training, |a, b| {
            1.0 - o.evaluate(a, b).unwrap()
        })
        .unwrap();
        let eucl = expected_neighbor_disagreement(m.as_ref(), &grid, &training, euclidean_distance)
            .unwrap();
        let proj = expected_neighbor_disagreement(
            m.as_ref(),
            &grid,
            &training,
            random_projection_distance(1, 3),
        )
        .unwrap();
        assert!(bsim <= eucl && bsim <= proj, "{bsim} {eucl} {proj}");
    }
}
