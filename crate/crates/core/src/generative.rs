//! Exactly-known synthetic classification problems.
//!
//! A [`ClassModel`] is a joint distribution `P(ω, x)` whose densities and
//! posteriors can be evaluated in closed form. Two families are provided:
//! axis-aligned Gaussian mixtures per class ([`MixtureClassModel`]) and models
//! with finite support ([`DiscreteClassModel`]), whose "density" is the
//! probability mass at a support point so that sums over an [`EvalGrid`] with
//! unit weights are exact enumerations.

use std::f64::consts::PI;
use std::fmt::Debug;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Tolerance on the normalization of probability vectors supplied by callers.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Minimum fraction of probability mass an [`EvalGrid`] must carry.
pub const MIN_GRID_COVERAGE: f64 = 0.999;

/// Half-width of the default quadrature box, in units of the largest standard deviation.
pub const GRID_HALF_WIDTH_STDS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub label: usize,
    pub point: Vec<f64>,
}

impl LabeledSample {
    pub fn new(label: usize, point: Vec<f64>) -> Self {
        Self { label, point }
    }
}

/// A joint distribution over a class label and a real feature vector.
pub trait ClassModel: Send + Sync + Debug {
    fn class_count(&self) -> usize;

    fn dimension(&self) -> usize;

    fn priors(&self) -> &[f64];

    /// `log P(ω = class, x)`; `-inf` where the joint vanishes.
    fn log_joint(&self, class: usize, x: &[f64]) -> f64;

    /// Draws a feature vector from `P(x | ω = class)`.
    fn sample_point(&self, class: usize, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Finite support, for models where `x` takes finitely many values.
    fn support(&self) -> Option<&[Vec<f64>]> {
        None
    }

    /// Box `[lo, hi]` holding essentially all of the probability mass.
    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>);

    fn joint(&self, class: usize, x: &[f64]) -> f64 {
        self.log_joint(class, x).exp()
    }

    /// Marginal density (or mass) `P(x)`.
    fn density(&self, x: &[f64]) -> f64 {
        (0..self.class_count()).map(|c| self.joint(c, x)).sum()
    }

    /// `P(ω | x)` evaluated in log space.
    fn class_posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dimension(self.dimension(), x.len())?;
        let logs: Vec<f64> = (0..self.class_count())
            .map(|c| self.log_joint(c, x))
            .collect();
        normalize_log_weights(&logs).ok_or(Error::UnsupportedPoint)
    }

    fn sample_one(&self, rng: &mut dyn RngCore) -> LabeledSample {
        let label = sample_categorical(self.priors(), rng);
        LabeledSample {
            label,
            point: self.sample_point(label, rng),
        }
    }
}

pub(crate) fn check_dimension(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Softmax of log weights. `None` if every weight is zero.
pub fn normalize_log_weights(logs: &[f64]) -> Option<Vec<f64>> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Some(exps.into_iter().map(|e| e / total).collect())
}

pub fn log_sum_exp(logs: impl IntoIterator<Item = f64>) -> f64 {
    let logs: Vec<f64> = logs.into_iter().collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub(crate) fn validate_distribution(
    probs: &[f64],
    what: &str,
    strictly_positive: bool,
) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidModel(format!(
            "{what}: empty probability vector"
        )));
    }
    for &p in probs {
        if !p.is_finite() || p < 0.0 || (strictly_positive && p <= 0.0) {
            return Err(Error::InvalidModel(format!(
                "{what}: invalid probability {p}"
            )));
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidModel(format!(
            "{what}: probabilities sum to {total}"
        )));
    }
    Ok(())
}

/// One axis-aligned Gaussian component of a class-conditional mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub variances: Vec<f64>,
}

impl Component {
    pub fn new(weight: f64, mean: Vec<f64>, variances: Vec<f64>) -> Self {
        Self {
            weight,
            mean,
            variances,
        }
    }

    /// Isotropic component.
    pub fn isotropic(weight: f64, mean: Vec<f64>, variance: f64) -> Self {
        let variances = vec![variance; mean.len()];
        Self {
            weight,
            mean,
            variances,
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.variances)
            .zip(x)
            .map(|((m, v), xi)| -0.5 * ((2.0 * PI * v).ln() + (xi - m) * (xi - m) / v))
            .sum()
    }
}

/// Per-class axis-aligned Gaussian mixtures with class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureClassModel {
    priors: Vec<f64>,
    classes: Vec<Vec<Component>>,
    dimension: usize,
}

impl MixtureClassModel {
    pub fn new(priors: Vec<f64>, classes: Vec<Vec<Component>>) -> Result<Self> {
        if priors.len() != classes.len() {
            return Err(Error::InvalidModel(format!(
                "{} priors for {} classes",
                priors.len(),
                classes.len()
            )));
        }
        validate_distribution(&priors, "class priors", true)?;
        let dimension = classes
            .first()
            .and_then(|c| c.first())
            .map(|c| c.mean.len())
            .ok_or_else(|| Error::InvalidModel("class without components".into()))?;
        if dimension == 0 {
            return Err(Error::InvalidModel("zero-dimensional feature space".into()));
        }
        for (k, comps) in classes.iter().enumerate() {
            if comps.is_empty() {
                return Err(Error::InvalidModel(format!("class {k} has no components")));
            }
            let weights: Vec<f64> = comps.iter().map(|c| c.weight).collect();
            validate_distribution(&weights, &format!("class {k} component weights"), false)?;
            for c in comps {
                if c.mean.len() != dimension || c.variances.len() != dimension {
                    return Err(Error::InvalidModel(format!(
                        "class {k}: component dimension mismatch"
                    )));
                }
                if c.variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::InvalidModel(format!(
                        "class {k}: variances must be positive"
                    )));
                }
                if c.mean.iter().any(|m| !m.is_finite()) {
                    return Err(Error::InvalidModel(format!("class {k}: non-finite mean")));
                }
            }
        }
        Ok(Self {
            priors,
            classes,
            dimension,
        })
    }

    /// Two single-Gaussian 1-D classes at `mean0` and `mean1` with common variance.
    pub fn two_gaussians(mean0: f64, mean1: f64, variance: f64, prior0: f64) -> Result<Self> {
        Self::new(
            vec![prior0, 1.0 - prior0],
            vec![
                vec![Component::isotropic(1.0, vec![mean0], variance)],
                vec![Component::isotropic(1.0, vec![mean1], variance)],
            ],
        )
    }

    /// Equal-prior unit-variance 1-D Gaussians centred at -1 and +1.
    pub fn symmetric_unit_pair() -> Self {
        Self::two_gaussians(-1.0, 1.0, 1.0, 0.5).expect("valid model")
    }

    pub fn components(&self, class: usize) -> &[Component] {
        &self.classes[class]
    }

    /// The same problem with class `k` renamed to `perm[k]`.
    pub fn permute_classes(&self, perm: &[usize]) -> Result<Self> {
        let c = self.class_count();
        let mut seen = vec![false; c];
        if perm.len() != c
            || perm
                .iter()
                .any(|&p| p >= c || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidArgument(
                "not a permutation of the classes".into(),
            ));
        }
        let mut priors = vec![0.0; c];
        let mut classes = vec![Vec::new(); c];
        for (k, &p) in perm.iter().enumerate() {
            priors[p] = self.priors[k];
            classes[p] = self.classes[k].clone();
        }
        Self::new(priors, classes)
    }
}

impl ClassModel for MixtureClassModel {
    fn class_count(&self) -> usize {
        self.classes.len()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn priors(&self) -> &[f64] {
        &self.priors
    }

    fn log_joint(&self, class: usize, x: &[f64]) -> f64 {
        let log_conditional = log_sum_exp(
            self.classes[class]
                .iter()
                .filter(|c| c.weight > 0.0)
                .map(|c| c.weight.ln() + c.log_density(x)),
        );
        self.priors[class].ln() + log_conditional
    }

    fn sample_point(&self, class: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let comps = &self.classes[class];
        let weights: Vec<f64> = comps.iter().map(|c| c.weight).collect();
        let comp = &comps[sample_categorical(&weights, rng)];
        comp.mean
            .iter()
            .zip(&comp.variances)
            .map(|(m, v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.sqrt() * z
            })
            .collect()
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let comps = self.classes.iter().flatten();
        let max_std = comps
            .clone()
            .flat_map(|c| c.variances.iter())
            .fold(0.0_f64, |a, v| a.max(v.sqrt()));
        let pad = GRID_HALF_WIDTH_STDS * max_std;
        let mut lo = vec![f64::INFINITY; self.dimension];
        let mut hi = vec![f64::NEG_INFINITY; self.dimension];
        for c in comps {
            for (d, m) in c.mean.iter().enumerate() {
                lo[d] = lo[d].min(m - pad);
                hi[d] = hi[d].max(m + pad);
            }
        }
        (lo, hi)
    }
}

/// A classification problem on a finite set of feature vectors, given by its
/// joint probability table. Classes may carry zero mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteClassModel {
    support: Vec<Vec<f64>>,
    /// `joint[class][point]`
    joint: Vec<Vec<f64>>,
    priors: Vec<f64>,
}

const SUPPORT_MATCH_TOL: f64 = 1e-12;

impl DiscreteClassModel {
    pub fn new(support: Vec<Vec<f64>>, joint: Vec<Vec<f64>>) -> Result<Self> {
        let dim = support
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidModel("empty support".into()))?;
        if dim == 0 || support.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidModel(
                "support points must share a nonzero dimension".into(),
            ));
        }
        if joint.is_empty() || joint.iter().any(|row| row.len() != support.len()) {
            return Err(Error::InvalidModel(
                "joint table shape does not match support".into(),
            ));
        }
        let flat: Vec<f64> = joint.iter().flatten().copied().collect();
        validate_distribution(&flat, "joint table", false)?;
        let priors = joint.iter().map(|row| row.iter().sum()).collect();
        Ok(Self {
            support,
            joint,
            priors,
        })
    }

    /// Builds the joint table from class priors and per-class point masses.
    pub fn from_conditionals(
        support: Vec<Vec<f64>>,
        priors: &[f64],
        conditionals: &[Vec<f64>],
    ) -> Result<Self> {
        validate_distribution(priors, "class priors", false)?;
        if conditionals.len() != priors.len() {
            return Err(Error::InvalidModel(
                "one conditional per class required".into(),
            ));
        }
        for (k, cond) in conditionals.iter().enumerate() {
            validate_distribution(cond, &format!("class {k} conditional"), false)?;
        }
        let joint = priors
            .iter()
            .zip(conditionals)
            .map(|(p, cond)| cond.iter().map(|q| p * q).collect())
            .collect();
        Self::new(support, joint)
    }

    /// 1-D support at the given scalar values.
    pub fn scalar_support(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    pub fn point_index(&self, x: &[f64]) -> Option<usize> {
        self.support.iter().position(|p| {
            p.len() == x.len()
                && p.iter()
                    .zip(x)
                    .all(|(a, b)| (a - b).abs() <= SUPPORT_MATCH_TOL)
        })
    }

    pub fn joint_table(&self) -> &[Vec<f64>] {
        &self.joint
    }
}

impl ClassModel for DiscreteClassModel {
    fn class_count(&self) -> usize {
        self.joint.len()
    }

    fn dimension(&self) -> usize {
        self.support[0].len()
    }

    fn priors(&self) -> &[f64] {
        &self.priors
    }

    fn log_joint(&self, class: usize, x: &[f64]) -> f64 {
        match self.point_index(x) {
            Some(j) => self.joint[class][j].ln(),
            None => f64::NEG_INFINITY,
        }
    }

    fn sample_point(&self, class: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let row = &self.joint[class];
        let total: f64 = row.iter().sum();
        let conditional: Vec<f64> = row.iter().map(|m| m / total).collect();
        self.support[sample_categorical(&conditional, rng)].clone()
    }

    fn support(&self) -> Option<&[Vec<f64>]> {
        Some(&self.support)
    }

    fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dimension();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in &self.support {
            for d in 0..dim {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }
}

/// Draws `count` i.i.d. labeled samples from `P(ω, x)`.
///
/// Sample `i` comes from shard `i / SHARD_SIZE`, whose stream depends only on
/// `seed` and the shard index, so the output does not depend on thread count.
pub fn sample(model: &dyn ClassModel, seed: u64, count: usize) -> Vec<LabeledSample> {
    let shards: Vec<_> = rng::shards(count).collect();
    shards
        .into_par_iter()
        .map(|(k, range)| {
            let mut r = rng::stream(seed, Purpose::Samples, k as u64);
            range.map(|_| model.sample_one(&mut r)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Regular axis used by rectangle-rule grids, kept for O(1) nearest lookups.
#[derive(Debug, Clone, PartialEq)]
struct Axis {
    lo: f64,
    step: f64,
    count: usize,
}

impl Axis {
    fn nearest(&self, v: f64) -> usize {
        if self.count == 1 {
            return 0;
        }
        let i = ((v - self.lo) / self.step).round();
        i.clamp(0.0, (self.count - 1) as f64) as usize
    }
}

/// Quadrature nodes and weights standing in for integrals over `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalGrid {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    axes: Option<Vec<Axis>>,
}

impl EvalGrid {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidArgument(
                "grid points and weights differ in length".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidArgument(
                "grid weights must be positive".into(),
            ));
        }
        if let Some(d) = points.first().map(Vec::len) {
            if points.iter().any(|p| p.len() != d) {
                return Err(Error::InvalidArgument(
                    "grid points differ in dimension".into(),
                ));
            }
        }
        Ok(Self {
            points,
            weights,
            axes: None,
        })
    }

    /// Uniform rectangle rule on the box `[lo, hi]` with `resolution` nodes per
    /// axis, endpoints included.
    pub fn rectangle(lo: &[f64], hi: &[f64], resolution: usize) -> Result<Self> {
        if resolution == 0 || lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidArgument(
                "rectangle grid needs a box and resolution >= 1".into(),
            ));
        }
        let axes: Vec<Axis> = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| {
                let step = if resolution > 1 {
                    (h - l) / (resolution - 1) as f64
                } else {
                    1.0
                };
                Axis {
                    lo: if resolution > 1 { l } else { 0.5 * (l + h) },
                    step,
                    count: resolution,
                }
            })
            .collect();
        let cell: f64 = axes.iter().map(|a| a.step).product();
        let total = resolution.pow(axes.len() as u32);
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut p = vec![0.0; axes.len()];
            // last axis varies fastest
            for d in (0..axes.len()).rev() {
                let i = rem % resolution;
                rem /= resolution;
                p[d] = axes[d].lo + i as f64 * axes[d].step;
            }
            points.push(p);
        }
        Ok(Self {
            weights: vec![cell; total],
            points,
            axes: Some(axes),
        })
    }

    /// Rectangle grid over the model's bounding box, or its support with unit
    /// weights when the model is discrete.
    pub fn for_model(model: &dyn ClassModel, resolution: usize) -> Result<Self> {
        match model.support() {
            Some(support) => Self::new(support.to_vec(), vec![1.0; support.len()]),
            None => {
                let (lo, hi) = model.bounding_box();
                Self::rectangle(&lo, &hi, resolution)
            }
        }
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// `Σ w·P(x)` over the grid.
    pub fn coverage(&self, model: &dyn ClassModel) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * model.density(p))
            .sum()
    }

    pub(crate) fn check_coverage(&self, model: &dyn ClassModel) -> Result<()> {
        check_dimension(model.dimension(), self.dimension())?;
        let coverage = self.coverage(model);
        if coverage < MIN_GRID_COVERAGE {
            return Err(Error::InsufficientGrid {
                coverage,
                required: MIN_GRID_COVERAGE,
            });
        }
        Ok(())
    }

    /// Index of the grid point closest to `x` (Euclidean; lowest index on ties).
    pub fn nearest(&self, x: &[f64]) -> usize {
        if let Some(axes) = &self.axes {
            return axes
                .iter()
                .zip(x)
                .fold(0, |flat, (axis, &v)| flat * axis.count + axis.nearest(v));
        }
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// `E_x[1 - max_ω P(ω|x)]` by quadrature on `grid`.
pub fn bayes_risk(model: &dyn ClassModel, grid: &EvalGrid) -> Result<f64> {
    grid.check_coverage(model)?;
    let risk: f64 = grid
        .points()
        .iter()
        .zip(grid.weights())
        .map(|(x, w)| {
            let joints: Vec<f64> = (0..model.class_count())
                .map(|c| model.joint(c, x))
                .collect();
            let total: f64 = joints.iter().sum();
            let max = joints.iter().copied().fold(0.0, f64::max);
            w * (total - max)
        })
        .sum();
    let c = model.class_count() as f64;
    Ok(risk.clamp(0.0, 1.0 - 1.0 / c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn disjoint_pair() -> DiscreteClassModel {
        DiscreteClassModel::new(
            DiscreteClassModel::scalar_support(&[-1.0, 0.0, 1.0, 2.0]),
            vec![vec![0.25, 0.25, 0.0, 0.0], vec![0.0, 0.0, 0.25, 0.25]],
        )
        .unwrap()
    }

    fn one_class() -> MixtureClassModel {
        MixtureClassModel::new(
            vec![1.0],
            vec![vec![Component::isotropic(1.0, vec![0.0], 1.0)]],
        )
        .unwrap()
    }

    #[test]
    fn empty_draw() {
        assert!(sample(&MixtureClassModel::symmetric_unit_pair(), 7, 0).is_empty());
    }

    #[test]
    fn single_class_labels() {
        let s = sample(&one_class(), 3, 100);
        assert_eq!(s.len(), 100);
        assert!(s.iter().all(|s| s.label == 0));
    }

    #[test]
    fn equal_prior_label_fraction() {
        let s = sample(&MixtureClassModel::symmetric_unit_pair(), 11, 100_000);
        let zeros = s.iter().filter(|s| s.label == 0).count() as f64 / 1e5;
        assert!((zeros - 0.5).abs() <= 0.01, "{zeros}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = MixtureClassModel::symmetric_unit_pair();
        assert_eq!(sample(&m, 5, 9000), sample(&m, 5, 9000));
        assert_ne!(sample(&m, 5, 10), sample(&m, 6, 10));
    }

    #[test]
    fn posterior_at_symmetry_point() {
        let p = MixtureClassModel::symmetric_unit_pair()
            .class_posterior(&[0.0])
            .unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn posterior_at_class_mean() {
        // N(1;1,1)/(N(1;1,1)+N(1;-1,1)) = 1/(1+e^-2)
        let p = MixtureClassModel::symmetric_unit_pair()
            .class_posterior(&[1.0])
            .unwrap();
        let expected = 1.0 / (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(p[1], expected, epsilon = 1e-14);
        assert_abs_diff_eq!(p[0] + p[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_on_disjoint_support() {
        let m = disjoint_pair();
        assert_eq!(m.class_posterior(&[0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(
            m.class_posterior(&[0.5]),
            Err(Error::UnsupportedPoint)
        ));
        assert!(matches!(
            m.class_posterior(&[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn posterior_far_in_the_tail_stays_defined() {
        let p = MixtureClassModel::symmetric_unit_pair()
            .class_posterior(&[60.0])
            .unwrap();
        assert!(p[1] > 0.999_999 && p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn risk_of_separable_problem() {
        let m = disjoint_pair();
        let g = EvalGrid::for_model(&m, 0).unwrap();
        assert_abs_diff_eq!(bayes_risk(&m, &g).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn risk_of_unit_pair_matches_normal_tail() {
        let m = MixtureClassModel::symmetric_unit_pair();
        let g = EvalGrid::for_model(&m, 2001).unwrap();
        // Φ(-1) from a Simpson integration of the standard normal density, see tests/oracles.rs
        assert_abs_diff_eq!(
            bayes_risk(&m, &g).unwrap(),
            0.158_655_253_931_457,
            epsilon = 5e-4
        );
    }

    #[test]
    fn risk_of_indistinguishable_classes() {
        let m = MixtureClassModel::two_gaussians(0.3, 0.3, 2.0, 0.5).unwrap();
        let g = EvalGrid::for_model(&m, 401).unwrap();
        assert_abs_diff_eq!(bayes_risk(&m, &g).unwrap(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn risk_rejects_narrow_grid() {
        let m = MixtureClassModel::symmetric_unit_pair();
        let g = EvalGrid::rectangle(&[-1.0], &[1.0], 101).unwrap();
        assert!(matches!(
            bayes_risk(&m, &g),
            Err(Error::InsufficientGrid { .. })
        ));
    }

    #[test]
    fn risk_is_permutation_invariant() {
        let m = MixtureClassModel::new(
            vec![0.2, 0.5, 0.3],
            vec![
                vec![Component::new(1.0, vec![0.0, 0.0], vec![1.0, 0.5])],
                vec![
                    Component::isotropic(0.5, vec![1.5, 0.0], 0.7),
                    Component::isotropic(0.5, vec![-1.0, 2.0], 0.4),
                ],
                vec![Component::isotropic(1.0, vec![0.5, 1.0], 1.2)],
            ],
        )
        .unwrap();
        let p = m.permute_classes(&[2, 0, 1]).unwrap();
        let g = EvalGrid::for_model(&m, 121).unwrap();
        let a = bayes_risk(&m, &g).unwrap();
        let b = bayes_risk(&p, &g).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(MixtureClassModel::two_gaussians(0.0, 1.0, 1.0, 1.2).is_err());
        assert!(MixtureClassModel::two_gaussians(0.0, 1.0, 0.0, 0.5).is_err());
        assert!(MixtureClassModel::new(vec![0.5, 0.5], vec![vec![]]).is_err());
        assert!(DiscreteClassModel::new(vec![vec![0.0]], vec![vec![0.5]]).is_err());
    }

    #[test]
    fn grid_nearest_lookup() {
        let g = EvalGrid::rectangle(&[-1.0, 0.0], &[1.0, 2.0], 3).unwrap();
        assert_eq!(g.len(), 9);
        let i = g.nearest(&[0.9, 0.2]);
        assert_eq!(g.points()[i], vec![1.0, 0.0]);
        let brute = EvalGrid::new(g.points().to_vec(), g.weights().to_vec()).unwrap();
        for x in [[-3.0, 5.0], [0.1, 1.4], [0.49, 0.51]] {
            assert_eq!(g.nearest(&x), brute.nearest(&x));
        }
    }
}
