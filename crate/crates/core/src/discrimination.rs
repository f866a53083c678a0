//! Same/different decisions on scalar observations.
//!
//! Two observations are either generated by one latent parameter `θ`
//! (`S = 1`) or by two independent draws of it (`S = 0`). Nothing here
//! assumes any class structure over `θ`.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generative::{sample_categorical, validate_distribution};
use crate::quadrature::gauss_legendre;
use crate::rng::{self, Purpose};

/// Gauss–Legendre nodes used to integrate over a Gaussian `θ` prior.
pub const THETA_QUADRATURE_NODES: usize = 201;

/// Half-width, in prior standard deviations, of the `θ` integration range.
pub const THETA_HALF_WIDTH_STDS: f64 = 6.0;

const MASS_TOL: f64 = 1e-9;
const ATOM_MATCH_TOL: f64 = 1e-12;

/// Finitely supported density over scalar observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDensity {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteDensity {
    /// Atoms are `(value, mass)`; repeated values are merged.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            if !v.is_finite() || !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidModel(format!("bad atom ({v}, {p})")));
            }
            match merged
                .iter_mut()
                .find(|(u, _)| (u - v).abs() <= ATOM_MATCH_TOL)
            {
                Some(atom) => atom.1 += p,
                None => merged.push((v, p)),
            }
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidModel(format!("atom masses sum to {total}")));
        }
        merged.retain(|a| a.1 > 0.0);
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self { atoms: merged })
    }

    pub fn point_mass(value: f64) -> Self {
        Self {
            atoms: vec![(value, 1.0)],
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mass_at(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .find(|(v, _)| (v - x).abs() <= ATOM_MATCH_TOL)
            .map_or(0.0, |a| a.1)
    }

    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let masses: Vec<f64> = self.atoms.iter().map(|a| a.1).collect();
        self.atoms[sample_categorical(&masses, rng)].0
    }
}

/// `P(x | θ) = Σ_φ Σ_ν P(x | θ, φ, ν) P(φ) P(ν)` for one fixed `θ`, where
/// `base(φ, ν)` gives `P(x | θ, φ, ν)` and the supports are `(value, prob)` lists.
pub fn appearance_marginal<F>(
    viewing: &[(f64, f64)],
    noise: &[(f64, f64)],
    base: F,
) -> Result<DiscreteDensity>
where
    F: Fn(f64, f64) -> DiscreteDensity,
{
    let pv: Vec<f64> = viewing.iter().map(|a| a.1).collect();
    let pn: Vec<f64> = noise.iter().map(|a| a.1).collect();
    validate_distribution(&pv, "viewing prior", false)?;
    validate_distribution(&pn, "noise prior", false)?;
    let mut atoms = Vec::new();
    for &(phi, p_phi) in viewing {
        for &(nu, p_nu) in noise {
            for &(x, p) in base(phi, nu).atoms() {
                atoms.push((x, p * p_phi * p_nu));
            }
        }
    }
    DiscreteDensity::new(atoms)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ThetaPrior {
    /// `(θ, probability)` pairs.
    Discrete(Vec<(f64, f64)>),
    Gaussian {
        mean: f64,
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Appearance {
    /// One density per entry of a discrete `θ` prior, in the same order.
    Table(Vec<DiscreteDensity>),
    /// `x | θ ~ N(θ, noise_sd²)`.
    Gaussian { noise_sd: f64 },
}

#[derive(Debug, Clone)]
pub struct DiscriminationModel {
    theta_prior: ThetaPrior,
    appearance: Appearance,
    same_prior: f64,
    /// Integration nodes over θ: `(θ, weight)` with weights summing to the prior mass covered.
    nodes: Vec<(f64, f64)>,
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

impl DiscriminationModel {
    pub fn new(theta_prior: ThetaPrior, appearance: Appearance, same_prior: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&same_prior) {
            return Err(Error::InvalidModel(format!(
                "same prior {same_prior} outside [0, 1]"
            )));
        }
        let nodes = match &theta_prior {
            ThetaPrior::Discrete(atoms) => {
                let probs: Vec<f64> = atoms.iter().map(|a| a.1).collect();
                validate_distribution(&probs, "theta prior", false)?;
                atoms.clone()
            }
            ThetaPrior::Gaussian { mean, sd } => {
                if !(sd.is_finite() && *sd > 0.0 && mean.is_finite()) {
                    return Err(Error::InvalidModel(
                        "theta prior needs finite mean and positive sd".into(),
                    ));
                }
                let half = THETA_HALF_WIDTH_STDS * sd;
                let (t, w) = gauss_legendre(THETA_QUADRATURE_NODES, mean - half, mean + half);
                t.into_iter()
                    .zip(w)
                    .map(|(t, w)| (t, w * normal_pdf(t, *mean, *sd)))
                    .collect()
            }
        };
        match (&theta_prior, &appearance) {
            (ThetaPrior::Discrete(atoms), Appearance::Table(table))
                if atoms.len() != table.len() =>
            {
                return Err(Error::InvalidModel(
                    "one appearance density per theta required".into(),
                ));
            }
            (ThetaPrior::Gaussian { .. }, Appearance::Table(_)) => {
                return Err(Error::InvalidModel(
                    "tabulated appearance needs a discrete theta prior".into(),
                ));
            }
            (_, Appearance::Gaussian { noise_sd })
                if !(noise_sd.is_finite() && *noise_sd > 0.0) =>
            {
                return Err(Error::InvalidModel("noise sd must be positive".into()));
            }
            _ => {}
        }
        Ok(Self {
            theta_prior,
            appearance,
            same_prior,
            nodes,
        })
    }

    /// `θ ∈ {1, 2}` uniformly; the observation equals `θ` except that it
    /// shows the other value with probability `flip`.
    pub fn flip_noise(flip: f64, same_prior: f64) -> Result<Self> {
        let table = [(1.0, 2.0), (2.0, 1.0)]
            .iter()
            .map(|&(own, other)| DiscreteDensity::new(vec![(own, 1.0 - flip), (other, flip)]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            ThetaPrior::Discrete(vec![(1.0, 0.5), (2.0, 0.5)]),
            Appearance::Table(table),
            same_prior,
        )
    }

    /// `θ ~ N(0, theta_sd²)`, `x | θ ~ N(θ, noise_sd²)`.
    pub fn gaussian(theta_sd: f64, noise_sd: f64, same_prior: f64) -> Result<Self> {
        Self::new(
            ThetaPrior::Gaussian {
                mean: 0.0,
                sd: theta_sd,
            },
            Appearance::Gaussian { noise_sd },
            same_prior,
        )
    }

    pub fn theta_prior(&self) -> &ThetaPrior {
        &self.theta_prior
    }

    pub fn appearance(&self) -> &Appearance {
        &self.appearance
    }

    pub fn same_prior(&self) -> f64 {
        self.same_prior
    }

    pub fn with_same_prior(&self, same_prior: f64) -> Result<Self> {
        Self::new(
            self.theta_prior.clone(),
            self.appearance.clone(),
            same_prior,
        )
    }

    /// `P(x | θ)` for the `index`-th integration node.
    fn appearance_at(&self, index: usize, x: f64) -> f64 {
        match &self.appearance {
            Appearance::Table(table) => table[index].mass_at(x),
            Appearance::Gaussian { noise_sd } => normal_pdf(x, self.nodes[index].0, *noise_sd),
        }
    }

    /// All observation values with positive probability, if finite.
    pub fn support(&self) -> Option<Vec<f64>> {
        let Appearance::Table(table) = &self.appearance else {
            return None;
        };
        let mut values: Vec<f64> = table
            .iter()
            .flat_map(|d| d.atoms().iter().map(|a| a.0))
            .collect();
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() <= ATOM_MATCH_TOL);
        Some(values)
    }

    /// `P(x) = Σ_θ P(x | θ) P(θ)`.
    pub fn marginal_density(&self, x: f64) -> f64 {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, (_, w))| w * self.appearance_at(i, x))
            .sum()
    }

    /// `P(x, x' | S = 1) = Σ_θ P(x | θ) P(x' | θ) P(θ)`.
    pub fn same_likelihood(&self, x: f64, x_prime: f64) -> f64 {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, (_, w))| w * self.appearance_at(i, x) * self.appearance_at(i, x_prime))
            .sum()
    }

    /// `P(x, x' | S = 0) = P(x) P(x')`.
    pub fn diff_likelihood(&self, x: f64, x_prime: f64) -> f64 {
        self.marginal_density(x) * self.marginal_density(x_prime)
    }

    /// Posterior and decision at the symmetric-loss threshold 1/2.
    pub fn same_posterior(&self, x: f64, x_prime: f64) -> Result<PairScore> {
        self.score(x, x_prime, 0.5)
    }

    /// Posterior with the decision "same" iff `posterior_same >= threshold`.
    pub fn score(&self, x: f64, x_prime: f64, threshold: f64) -> Result<PairScore> {
        let same = self.same_likelihood(x, x_prime);
        let diff = self.diff_likelihood(x, x_prime);
        let a = same * self.same_prior;
        let b = diff * (1.0 - self.same_prior);
        if a + b <= 0.0 {
            return Err(Error::ImpossiblePair);
        }
        let posterior_same = (a / (a + b)).clamp(0.0, 1.0);
        Ok(PairScore {
            same_likelihood: same,
            diff_likelihood: diff,
            posterior_same,
            decision: posterior_same >= threshold,
        })
    }

    /// One draw of the full process: `S`, then `θ` (one or two), then both observations.
    pub fn sample_pair(&self, rng: &mut dyn RngCore) -> (f64, f64, bool) {
        let same = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) < self.same_prior;
        let first = self.draw_theta(rng);
        let second = if same { first } else { self.draw_theta(rng) };
        (self.draw_x(first, rng), self.draw_x(second, rng), same)
    }

    /// Index into the discrete prior, or the θ value itself for a Gaussian prior.
    fn draw_theta(&self, rng: &mut dyn RngCore) -> f64 {
        match &self.theta_prior {
            ThetaPrior::Discrete(atoms) => {
                let probs: Vec<f64> = atoms.iter().map(|a| a.1).collect();
                sample_categorical(&probs, rng) as f64
            }
            ThetaPrior::Gaussian { mean, sd } => Normal::new(*mean, *sd)
                .expect("validated")
                .sample(&mut &mut *rng),
        }
    }

    fn draw_x(&self, theta: f64, rng: &mut dyn RngCore) -> f64 {
        let centre = match &self.theta_prior {
            ThetaPrior::Discrete(atoms) => atoms[theta as usize].0,
            ThetaPrior::Gaussian { .. } => theta,
        };
        match &self.appearance {
            Appearance::Table(table) => table[theta as usize].sample(rng),
            Appearance::Gaussian { noise_sd } => Normal::new(centre, *noise_sd)
                .expect("validated")
                .sample(&mut &mut *rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairScore {
    pub same_likelihood: f64,
    pub diff_likelihood: f64,
    pub posterior_same: f64,
    pub decision: bool,
}

/// Posterior threshold minimizing expected cost when a false "same" costs
/// `false_alarm_cost` and a missed "same" costs `miss_cost`.
pub fn cost_threshold(false_alarm_cost: f64, miss_cost: f64) -> Result<f64> {
    if !(false_alarm_cost >= 0.0 && miss_cost >= 0.0 && false_alarm_cost + miss_cost > 0.0) {
        return Err(Error::InvalidArgument(
            "costs must be non-negative and not both zero".into(),
        ));
    }
    Ok(false_alarm_cost / (false_alarm_cost + miss_cost))
}

/// `count` evenly spaced thresholds from 0 to 1 inclusive.
pub fn threshold_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

/// Exact error of an arbitrary pair rule (`true` = "same") by enumerating
/// every pair of support values under both `S`.
pub fn exact_rule_error<R>(model: &DiscriminationModel, rule: R) -> Result<f64>
where
    R: Fn(f64, f64) -> Result<bool>,
{
    let support = model.support().ok_or_else(|| {
        Error::InvalidArgument("exact enumeration needs a finite-support model".into())
    })?;
    let mut error = 0.0;
    for &x in &support {
        for &y in &support {
            let same_mass = model.same_prior * model.same_likelihood(x, y);
            let diff_mass = (1.0 - model.same_prior) * model.diff_likelihood(x, y);
            if same_mass + diff_mass == 0.0 {
                continue;
            }
            error += if rule(x, y)? { diff_mass } else { same_mass };
        }
    }
    Ok(error)
}

/// Exact error of thresholding the posterior at each threshold.
pub fn exact_threshold_errors(model: &DiscriminationModel, thresholds: &[f64]) -> Result<Vec<f64>> {
    thresholds
        .iter()
        .map(|&t| exact_rule_error(model, |x, y| Ok(model.score(x, y, t)?.decision)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub threshold: f64,
    pub error: f64,
    pub stderr: f64,
}

/// Empirical error of each threshold on `trials` pairs from the full
/// generative process; every threshold sees the same pairs.
pub fn monte_carlo_threshold_errors(
    model: &DiscriminationModel,
    thresholds: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::InvalidArgument(
            "trial count must be positive".into(),
        ));
    }
    let counts = rng::shards(trials)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(k, range)| {
            let mut r = rng::stream(seed, Purpose::Trials, k as u64);
            let mut wrong = vec![0usize; thresholds.len()];
            for _ in range {
                let (x, y, same) = model.sample_pair(&mut r);
                let posterior = model.same_posterior(x, y)?.posterior_same;
                for (w, &t) in wrong.iter_mut().zip(thresholds) {
                    if (posterior >= t) != same {
                        *w += 1;
                    }
                }
            }
            Ok(wrong)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = trials as f64;
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(i, &threshold)| {
            let error = counts.iter().map(|c| c[i]).sum::<usize>() as f64 / n;
            SweepRow {
                threshold,
                error,
                stderr: (error * (1.0 - error) / n).sqrt(),
            }
        })
        .collect())
}

/// Index of the smallest error; among equal minima, the one closest to `target`.
pub fn best_threshold_index(thresholds: &[f64], errors: &[f64], target: f64) -> Option<usize> {
    let min = errors.iter().copied().fold(f64::INFINITY, f64::min);
    (0..errors.len())
        .filter(|&i| errors[i] <= min)
        .min_by(|&a, &b| {
            (thresholds[a] - target)
                .abs()
                .total_cmp(&(thresholds[b] - target).abs())
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub thresholds: Vec<f64>,
    /// Exact errors, present for finite-support models.
    pub exact: Option<Vec<f64>>,
    /// Monte-Carlo sweep, present when `trials > 0`.
    pub monte_carlo: Option<Vec<SweepRow>>,
    /// Whether the exact error at 1/2 equals the minimum over the grid.
    pub exact_half_is_minimal: Option<bool>,
    /// Grid steps between 1/2 and the empirical minimum.
    pub monte_carlo_steps_from_half: Option<usize>,
}

/// Checks that thresholding the posterior at 1/2 minimizes error over `thresholds`.
pub fn optimality_check(
    model: &DiscriminationModel,
    thresholds: &[f64],
    trials: usize,
    seed: u64,
) -> Result<OptimalityReport> {
    if thresholds.is_empty() {
        return Err(Error::InvalidArgument("threshold grid is empty".into()));
    }
    let half =
        best_threshold_index(thresholds, &vec![0.0; thresholds.len()], 0.5).expect("non-empty");
    let exact = match model.support() {
        Some(_) => Some(exact_threshold_errors(model, thresholds)?),
        None => None,
    };
    let exact_half_is_minimal = exact.as_ref().map(|errors| {
        let at_half = exact_rule_error(model, |x, y| Ok(model.same_posterior(x, y)?.decision))
            .unwrap_or(f64::NAN);
        errors.iter().all(|e| at_half <= e + 1e-15)
    });
    let monte_carlo = if trials > 0 {
        Some(monte_carlo_threshold_errors(
            model, thresholds, trials, seed,
        )?)
    } else {
        None
    };
    let monte_carlo_steps_from_half = monte_carlo.as_ref().map(|rows| {
        let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let best = best_threshold_index(thresholds, &errors, 0.5).expect("non-empty");
        best.abs_diff(half)
    });
    Ok(OptimalityReport {
        thresholds: thresholds.to_vec(),
        exact,
        monte_carlo,
        exact_half_is_minimal,
        monte_carlo_steps_from_half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn flip() -> DiscriminationModel {
        DiscriminationModel::flip_noise(0.1, 0.5).unwrap()
    }

    #[test]
    fn appearance_marginal_examples() {
        let base = |phi: f64, nu: f64| DiscreteDensity::point_mass(3.0 + phi + nu);
        let single = appearance_marginal(&[(0.0, 1.0)], &[(0.0, 1.0)], base).unwrap();
        assert_eq!(single, DiscreteDensity::point_mass(3.0));
        let eps = 0.25;
        let spread = appearance_marginal(&[(0.0, 1.0)], &[(-eps, 0.5), (eps, 0.5)], base).unwrap();
        assert_eq!(spread.atoms(), &[(3.0 - eps, 0.5), (3.0 + eps, 0.5)]);
        // flip noise built from a noise variable that swaps 1 and 2
        let swap = |theta: f64| {
            move |_: f64, nu: f64| {
                DiscreteDensity::point_mass(if nu > 0.0 { 3.0 - theta } else { theta })
            }
        };
        let d = appearance_marginal(&[(0.0, 1.0)], &[(0.0, 0.9), (1.0, 0.1)], swap(1.0)).unwrap();
        assert_abs_diff_eq!(d.mass_at(1.0), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(d.mass_at(2.0), 0.1, epsilon = 1e-15);
        assert!(appearance_marginal(&[(0.0, 0.7)], &[(0.0, 1.0)], base).is_err());
    }

    #[test]
    fn flip_noise_likelihoods() {
        let m = flip();
        assert_abs_diff_eq!(m.same_likelihood(1.0, 1.0), 0.41, epsilon = 1e-15);
        assert_abs_diff_eq!(m.same_likelihood(1.0, 2.0), 0.09, epsilon = 1e-15);
        assert_abs_diff_eq!(m.diff_likelihood(1.0, 1.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(m.diff_likelihood(1.0, 2.0), 0.25, epsilon = 1e-15);
        assert_eq!(m.same_likelihood(1.0, 3.0), 0.0);
    }

    #[test]
    fn flip_noise_posteriors() {
        let m = flip();
        let a = m.same_posterior(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(a.posterior_same, 0.41 / 0.66, epsilon = 1e-15);
        assert!(a.decision);
        let b = m.same_posterior(1.0, 2.0).unwrap();
        assert_abs_diff_eq!(b.posterior_same, 0.09 / 0.34, epsilon = 1e-15);
        assert!(!b.decision);
        assert!(matches!(
            m.same_posterior(1.0, 5.0),
            Err(Error::ImpossiblePair)
        ));
        let certain = m.with_same_prior(1.0).unwrap();
        assert_eq!(
            certain.same_posterior(1.0, 2.0).unwrap().posterior_same,
            1.0
        );
    }

    #[test]
    fn singleton_theta_is_unidentifiable() {
        let table = vec![DiscreteDensity::new(vec![(0.0, 0.3), (1.0, 0.7)]).unwrap()];
        let m = DiscriminationModel::new(
            ThetaPrior::Discrete(vec![(0.0, 1.0)]),
            Appearance::Table(table),
            0.3,
        )
        .unwrap();
        for (x, y) in [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            assert_abs_diff_eq!(
                m.same_likelihood(x, y),
                m.diff_likelihood(x, y),
                epsilon = 1e-15
            );
            assert_abs_diff_eq!(
                m.same_posterior(x, y).unwrap().posterior_same,
                0.3,
                epsilon = 1e-15
            );
        }
        let report = optimality_check(&m, &threshold_grid(21), 0, 0).unwrap();
        let errors = report.exact.unwrap();
        assert_abs_diff_eq!(errors[10], 0.3, epsilon = 1e-15);
        assert_eq!(report.exact_half_is_minimal, Some(true));
    }

    #[test]
    fn flip_noise_exact_sweep() {
        let m = flip();
        let grid = threshold_grid(21);
        let report = optimality_check(&m, &grid, 0, 0).unwrap();
        let errors = report.exact.unwrap();
        // min(same, diff) mass over the four pairs: 2·0.5·0.25 + 2·0.5·0.09
        assert_abs_diff_eq!(errors[10], 0.34, epsilon = 1e-15);
        assert_eq!(report.exact_half_is_minimal, Some(true));
        assert!(report.monte_carlo.is_none());
        // thresholding at 0 always says "same": error is P(S=0)
        assert_abs_diff_eq!(errors[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn bayes_rule_beats_comparison_pool() {
        let m = DiscriminationModel::flip_noise(0.2, 0.4).unwrap();
        let bayes = exact_rule_error(&m, |x, y| Ok(m.same_posterior(x, y)?.decision)).unwrap();
        for tau in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let e = exact_rule_error(&m, |x, y| Ok((x - y).abs() <= tau)).unwrap();
            assert!(bayes <= e + 1e-15);
        }
        for t in [0.0, 0.05, 0.1, 0.2, 0.4, 1.0] {
            let e = exact_rule_error(&m, |x, y| Ok(m.same_likelihood(x, y) >= t)).unwrap();
            assert!(bayes <= e + 1e-15);
        }
    }

    #[test]
    fn mixture_identity_matches_enumeration() {
        let m = DiscriminationModel::flip_noise(0.15, 0.35).unwrap();
        let probs = [0.5, 0.5];
        let table = [[0.85, 0.15], [0.15, 0.85]];
        for (xi, x) in [1.0, 2.0].into_iter().enumerate() {
            for (yi, y) in [1.0, 2.0].into_iter().enumerate() {
                let mut same = 0.0;
                let mut diff = 0.0;
                for t in 0..2 {
                    same += probs[t] * table[t][xi] * table[t][yi];
                    for u in 0..2 {
                        diff += probs[t] * probs[u] * table[t][xi] * table[u][yi];
                    }
                }
                let joint = 0.35 * same + 0.65 * diff;
                let model = 0.35 * m.same_likelihood(x, y) + 0.65 * m.diff_likelihood(x, y);
                assert_abs_diff_eq!(model, joint, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn gaussian_likelihoods_match_closed_form() {
        let (s, n) = (1.0, 0.5);
        let m = DiscriminationModel::gaussian(s, n, 0.5).unwrap();
        let var = s * s + n * n;
        let rho = s * s / var;
        for (x, y) in [(0.0, 0.0), (0.3, -0.8), (1.5, 1.2), (-2.0, 2.0)] {
            let q = (x * x - 2.0 * rho * x * y + y * y) / (var * (1.0 - rho * rho));
            let bivariate =
                (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * var * (1.0 - rho * rho).sqrt());
            assert!((m.same_likelihood(x, y) - bivariate).abs() <= 1e-9 * bivariate.max(1e-3));
            let product = normal_pdf(x, 0.0, var.sqrt()) * normal_pdf(y, 0.0, var.sqrt());
            assert!((m.diff_likelihood(x, y) - product).abs() <= 1e-9 * product.max(1e-3));
        }
    }

    #[test]
    fn scores_are_symmetric() {
        let g = DiscriminationModel::gaussian(1.0, 0.5, 0.3).unwrap();
        for (x, y) in [(0.1, 0.9), (-1.3, 2.2)] {
            let a = g.same_posterior(x, y).unwrap();
            let b = g.same_posterior(y, x).unwrap();
            assert!((a.posterior_same - b.posterior_same).abs() <= 1e-12);
            assert!((a.same_likelihood - b.same_likelihood).abs() <= 1e-12);
        }
    }

    #[test]
    fn monte_carlo_sweep_agrees_with_exact() {
        let m = flip();
        let grid = threshold_grid(21);
        let rows = monte_carlo_threshold_errors(&m, &grid, 20_000, 7).unwrap();
        let exact = exact_threshold_errors(&m, &grid).unwrap();
        for (r, e) in rows.iter().zip(&exact) {
            assert!(
                (r.error - e).abs() <= 4.0 * r.stderr + 1e-12,
                "{} vs {e}",
                r.error
            );
        }
        assert_eq!(
            rows,
            monte_carlo_threshold_errors(&m, &grid, 20_000, 7).unwrap()
        );
        assert!(monte_carlo_threshold_errors(&m, &grid, 0, 7).is_err());
    }

    #[test]
    fn cost_threshold_values() {
        assert_eq!(cost_threshold(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(cost_threshold(3.0, 1.0).unwrap(), 0.75);
        assert!(cost_threshold(0.0, 0.0).is_err());
    }

    #[test]
    fn best_index_prefers_target_on_ties() {
        let grid = threshold_grid(5);
        assert_eq!(
            best_threshold_index(&grid, &[0.3, 0.1, 0.1, 0.1, 0.4], 0.5),
            Some(2)
        );
        assert_eq!(
            best_threshold_index(&grid, &[0.3, 0.1, 0.2, 0.2, 0.4], 0.5),
            Some(1)
        );
    }
}
