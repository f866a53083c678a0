use crate::error::{Error, Result};
use crate::generative::{EvalGrid, LabeledSample};
use crate::similarity::{Provenance, SimilarityOracle};

/// Self-similarities this far below 1/2 are treated as estimation noise and clamped.
pub const CLAMP_TOL: f64 = 1e-6;
/// Clamp tolerance for kernel-estimated oracles, whose self-similarity can
/// dip below 1/2 near the boundary by a few hundredths.
pub const ESTIMATED_CLAMP_TOL: f64 = 0.1;
pub const EXACT_BOUNDARY_TOL: f64 = 1e-9;
pub const ESTIMATED_BOUNDARY_TOL: f64 = 0.02;
/// Largest-margin grid points that vote on each region assignment.
pub const REFERENCE_COUNT: usize = 5;

/// The two roots `1/2 ± r` for `P(ω=0|x)`; `plus ≥ minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPair {
    pub plus: f64,
    pub minus: f64,
}

pub fn posterior_pair_from_self_similarity(s_xx: f64) -> Result<PosteriorPair> {
    posterior_pair_with_clamp(s_xx, CLAMP_TOL)
}

/// As [`posterior_pair_from_self_similarity`], with values in `[1/2 - clamp_tol, 1/2)` clamped to 1/2.
pub fn posterior_pair_with_clamp(s_xx: f64, clamp_tol: f64) -> Result<PosteriorPair> {
    if !(s_xx >= 0.5 - clamp_tol && s_xx <= 1.0) {
        return Err(Error::InvalidSelfSimilarity(s_xx));
    }
    let r = 0.5 * (2.0 * s_xx.max(0.5) - 1.0).sqrt();
    Ok(PosteriorPair {
        plus: 0.5 + r,
        minus: 0.5 - r,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SameRegion {
    Same,
    Different,
    Boundary,
}

/// Whether two points share a decision region, read off `s(x, x')` against 1/2.
pub fn same_region(s_xxp: f64, boundary_tol: f64) -> SameRegion {
    if s_xxp > 0.5 + boundary_tol {
        SameRegion::Same
    } else if s_xxp < 0.5 - boundary_tol {
        SameRegion::Different
    } else {
        SameRegion::Boundary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    R0,
    R1,
    Boundary,
}

impl Region {
    fn flipped(self) -> Self {
        match self {
            Region::R0 => Region::R1,
            Region::R1 => Region::R0,
            Region::Boundary => Region::Boundary,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Region::R0 => "R0",
            Region::R1 => "R1",
            Region::Boundary => "boundary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnchorPolicy {
    /// Grid point with the largest `|s(x, x) - 1/2|`, lowest index on ties.
    #[default]
    MaxMargin,
    /// A caller-chosen grid point.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionAssignment {
    pub regions: Vec<Region>,
    pub anchor: usize,
    pub self_similarity: Vec<f64>,
}

fn sign_region(s: f64) -> Region {
    if s >= 0.5 {
        Region::R0
    } else {
        Region::R1
    }
}

/// Tags every grid point R0, R1 or boundary relative to an anchor placed in R0.
///
/// Each non-boundary point is compared with up to [`REFERENCE_COUNT`]
/// largest-margin reference points (the anchor first), each reference having
/// been tagged against the anchor. The majority of the implied tags wins;
/// with no decisive vote the raw sign of `s(x, anchor) - 1/2` decides.
pub fn assign_regions(
    grid: &EvalGrid,
    oracle: &SimilarityOracle,
    policy: AnchorPolicy,
    boundary_tol: f64,
) -> Result<RegionAssignment> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty grid".into()));
    }
    let self_similarity = points
        .iter()
        .map(|x| oracle.evaluate(x, x))
        .collect::<Result<Vec<_>>>()?;
    let margin = |i: usize| (self_similarity[i] - 0.5).abs();
    let informative: Vec<usize> = (0..points.len())
        .filter(|&i| margin(i) > boundary_tol)
        .collect();

    let anchor = match policy {
        AnchorPolicy::MaxMargin => {
            let mut best: Option<usize> = None;
            for &i in &informative {
                if best.is_none_or(|b| margin(i) > margin(b)) {
                    best = Some(i);
                }
            }
            best.ok_or(Error::Unidentifiable)?
        }
        AnchorPolicy::Index(i) => {
            if i >= points.len() {
                return Err(Error::InvalidArgument(format!(
                    "anchor index {i} outside grid"
                )));
            }
            if margin(i) <= boundary_tol {
                return Err(Error::InvalidArgument(format!(
                    "anchor {i} lies on the decision boundary"
                )));
            }
            i
        }
    };

    let mut by_margin = informative.clone();
    by_margin.retain(|&i| i != anchor);
    by_margin.sort_by(|&a, &b| margin(b).total_cmp(&margin(a)).then(a.cmp(&b)));
    let mut references = vec![(anchor, Region::R0)];
    for &r in by_margin.iter().take(REFERENCE_COUNT - 1) {
        let s = oracle.evaluate(&points[r], &points[anchor])?;
        let tag = match same_region(s, boundary_tol) {
            SameRegion::Same => Region::R0,
            SameRegion::Different => Region::R1,
            SameRegion::Boundary => sign_region(s),
        };
        references.push((r, tag));
    }

    let mut regions = vec![Region::Boundary; points.len()];
    for &i in &informative {
        if i == anchor {
            regions[i] = Region::R0;
            continue;
        }
        let (mut r0, mut r1) = (0usize, 0usize);
        let mut anchor_s = None;
        for &(r, tag) in &references {
            let s = oracle.evaluate(&points[i], &points[r])?;
            if r == anchor {
                anchor_s = Some(s);
            }
            let implied = match same_region(s, boundary_tol) {
                SameRegion::Same => tag,
                SameRegion::Different => tag.flipped(),
                SameRegion::Boundary => continue,
            };
            match implied {
                Region::R0 => r0 += 1,
                _ => r1 += 1,
            }
        }
        regions[i] = match r0.cmp(&r1) {
            std::cmp::Ordering::Greater => Region::R0,
            std::cmp::Ordering::Less => Region::R1,
            std::cmp::Ordering::Equal => sign_region(anchor_s.expect("anchor is a reference")),
        };
    }
    Ok(RegionAssignment {
        regions,
        anchor,
        self_similarity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    A,
    B,
    Undecided,
}

impl Branch {
    pub fn as_str(self) -> &'static str {
        match self {
            Branch::A => "A",
            Branch::B => "B",
            Branch::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchChoice {
    pub branch: Branch,
    /// `Σ log P_A(ω_i|x_i) - log P_B(ω_i|x_i)`; `±inf` when a candidate is eliminated.
    pub log_ratio: f64,
    /// Set when the evidence was tied and the choice defaulted to A.
    pub tie: bool,
}

/// Picks the candidate posterior under which the labeled samples are more
/// likely. Each candidate maps `(x, label)` to `P(ω = label | x)`.
pub fn disambiguate_branch<A, B>(
    candidate_a: A,
    candidate_b: B,
    samples: &[LabeledSample],
) -> BranchChoice
where
    A: Fn(&[f64], usize) -> f64,
    B: Fn(&[f64], usize) -> f64,
{
    let mut log_ratio = 0.0;
    let (mut a_out, mut b_out) = (false, false);
    for s in samples {
        let pa = candidate_a(&s.point, s.label);
        let pb = candidate_b(&s.point, s.label);
        match (pa > 0.0, pb > 0.0) {
            (true, true) => log_ratio += pa.ln() - pb.ln(),
            (false, true) => a_out = true,
            (true, false) => b_out = true,
            (false, false) => {
                a_out = true;
                b_out = true;
            }
        }
    }
    let log_ratio = match (a_out, b_out) {
        (true, false) => f64::NEG_INFINITY,
        (false, true) => f64::INFINITY,
        (true, true) => 0.0,
        (false, false) => log_ratio,
    };
    if log_ratio > 0.0 {
        BranchChoice {
            branch: Branch::A,
            log_ratio,
            tie: false,
        }
    } else if log_ratio < 0.0 {
        BranchChoice {
            branch: Branch::B,
            log_ratio,
            tie: false,
        }
    } else {
        BranchChoice {
            branch: Branch::A,
            log_ratio: 0.0,
            tie: true,
        }
    }
}

/// Where the per-point margin `|P(ω=0|x) - 1/2|` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MarginSource {
    /// Invert `s(x, x)`; the posterior is one of the two roots at every point.
    #[default]
    SelfSimilarity,
    /// Least-squares fit of `s(x, r) - 1/2 = 2 d(x) d(r)` over the
    /// largest-margin reference points `r`. Linear in the oracle's values, so
    /// estimation noise is not amplified by the square root near the boundary.
    References,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoClassOptions {
    pub boundary_tol: f64,
    pub clamp_tol: f64,
    pub anchor: AnchorPolicy,
    pub margin_source: MarginSource,
}

impl TwoClassOptions {
    /// Boundary tolerance matched to how the oracle was obtained.
    pub fn for_oracle(oracle: &SimilarityOracle) -> Self {
        let (boundary_tol, clamp_tol, margin_source) = match oracle.provenance() {
            Provenance::Exact => (EXACT_BOUNDARY_TOL, CLAMP_TOL, MarginSource::SelfSimilarity),
            _ => (
                ESTIMATED_BOUNDARY_TOL,
                ESTIMATED_CLAMP_TOL,
                MarginSource::References,
            ),
        };
        Self {
            boundary_tol,
            clamp_tol,
            margin_source,
            anchor: AnchorPolicy::MaxMargin,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoClassReconstruction {
    pub grid: EvalGrid,
    pub candidate_pairs: Vec<PosteriorPair>,
    pub assignment: RegionAssignment,
    pub branch: Branch,
    pub choice: Option<BranchChoice>,
    /// `P(ω=0|x)` per grid point under orientation A (anchor in class 0's region).
    pub oriented: Vec<f64>,
    /// `P(ω=0|x)` per grid point once the branch is chosen.
    pub posterior: Option<Vec<f64>>,
}

impl TwoClassReconstruction {
    pub fn regions(&self) -> &[Region] {
        &self.assignment.regions
    }

    /// Orientation-B posterior, the complement of orientation A.
    pub fn complement(&self) -> Vec<f64> {
        self.oriented.iter().map(|p| 1.0 - p).collect()
    }

    /// Final `P(ω=0|x)` at the grid point nearest to `x`.
    pub fn posterior_at(&self, x: &[f64]) -> Option<f64> {
        self.posterior.as_ref().map(|p| p[self.grid.nearest(x)])
    }
}

fn class_probability(p0: f64, label: usize) -> f64 {
    match label {
        0 => p0,
        1 => 1.0 - p0,
        _ => 0.0,
    }
}

/// Orientation-A posterior from cross-similarities with the largest-margin points.
fn reference_fit(
    grid: &EvalGrid,
    oracle: &SimilarityOracle,
    assignment: &RegionAssignment,
    pairs: &[PosteriorPair],
) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..pairs.len())
        .filter(|&i| assignment.regions[i] != Region::Boundary)
        .collect();
    order.sort_by(|&a, &b| pairs[b].plus.total_cmp(&pairs[a].plus).then(a.cmp(&b)));
    let references: Vec<(usize, f64)> = order
        .into_iter()
        .take(REFERENCE_COUNT)
        .map(|i| {
            let d = pairs[i].plus - 0.5;
            (
                i,
                if assignment.regions[i] == Region::R0 {
                    d
                } else {
                    -d
                },
            )
        })
        .collect();
    let scale: f64 = references.iter().map(|(_, d)| 4.0 * d * d).sum();
    let points = grid.points();
    points
        .iter()
        .map(|x| {
            let mut fit = 0.0;
            for &(r, d) in &references {
                fit += 2.0 * d * (oracle.evaluate(x, &points[r])? - 0.5);
            }
            Ok((0.5 + fit / scale).clamp(0.0, 1.0))
        })
        .collect()
}

/// Full two-class pipeline: invert self-similarities, assign decision regions,
/// then settle the global flip with the samples.
pub fn reconstruct_two_class(
    oracle: &SimilarityOracle,
    grid: &EvalGrid,
    samples: &[LabeledSample],
    options: TwoClassOptions,
) -> Result<TwoClassReconstruction> {
    let assignment = assign_regions(grid, oracle, options.anchor, options.boundary_tol)?;
    let candidate_pairs = assignment
        .self_similarity
        .iter()
        .map(|&s| posterior_pair_with_clamp(s, options.clamp_tol))
        .collect::<Result<Vec<_>>>()?;
    let oriented: Vec<f64> = match options.margin_source {
        MarginSource::SelfSimilarity => candidate_pairs
            .iter()
            .zip(&assignment.regions)
            .map(|(pair, region)| match region {
                Region::R0 => pair.plus,
                Region::R1 => pair.minus,
                Region::Boundary => 0.5,
            })
            .collect(),
        MarginSource::References => reference_fit(grid, oracle, &assignment, &candidate_pairs)?,
    };

    let (branch, choice, posterior) = if samples.is_empty() {
        (Branch::Undecided, None, None)
    } else {
        let lookup = |x: &[f64]| oriented[grid.nearest(x)];
        let choice = disambiguate_branch(
            |x, label| class_probability(lookup(x), label),
            |x, label| class_probability(1.0 - lookup(x), label),
            samples,
        );
        let posterior = match choice.branch {
            Branch::B => oriented.iter().map(|p| 1.0 - p).collect(),
            _ => oriented.clone(),
        };
        (choice.branch, Some(choice), Some(posterior))
    };

    Ok(TwoClassReconstruction {
        grid: grid.clone(),
        candidate_pairs,
        assignment,
        branch,
        choice,
        oriented,
        posterior,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generative::{sample, ClassModel, DiscreteClassModel, MixtureClassModel};
    use crate::similarity::exact_similarity;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn posterior_pairs() {
        let p = posterior_pair_from_self_similarity(1.0).unwrap();
        assert_eq!((p.plus, p.minus), (1.0, 0.0));
        let p = posterior_pair_from_self_similarity(0.5).unwrap();
        assert_eq!((p.plus, p.minus), (0.5, 0.5));
        // 0.8² + 0.2² = 0.68
        let p = posterior_pair_from_self_similarity(0.68).unwrap();
        assert_abs_diff_eq!(p.plus, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(p.minus, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(p.plus * p.plus + p.minus * p.minus, 0.68, epsilon = 1e-9);
    }

    #[test]
    fn self_similarity_clamp_and_rejection() {
        let p = posterior_pair_from_self_similarity(0.5 - 1e-7).unwrap();
        assert_eq!((p.plus, p.minus), (0.5, 0.5));
        assert!(matches!(
            posterior_pair_from_self_similarity(0.49),
            Err(Error::InvalidSelfSimilarity(_))
        ));
        assert!(matches!(
            posterior_pair_from_self_similarity(1.01),
            Err(Error::InvalidSelfSimilarity(_))
        ));
        assert!(posterior_pair_from_self_similarity(f64::NAN).is_err());
    }

    #[test]
    fn region_predicate() {
        // margins d=0.3, d'=0.2: 1/2 ± 2·0.06
        assert_eq!(same_region(0.62, 1e-9), SameRegion::Same);
        assert_eq!(same_region(0.38, 1e-9), SameRegion::Different);
        assert_eq!(same_region(0.5, 1e-9), SameRegion::Boundary);
    }

    fn disjoint() -> DiscreteClassModel {
        DiscreteClassModel::new(
            DiscreteClassModel::scalar_support(&[0.0, 1.0, 2.0, 3.0, 4.0]),
            vec![vec![0.1, 0.3, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.2, 0.2, 0.2]],
        )
        .unwrap()
    }

    #[test]
    fn regions_of_separable_problem() {
        let m = disjoint();
        let grid = EvalGrid::for_model(&m, 0).unwrap();
        let o = exact_similarity(Arc::new(m.clone()));
        let a = assign_regions(&grid, &o, AnchorPolicy::MaxMargin, EXACT_BOUNDARY_TOL).unwrap();
        assert_eq!(a.anchor, 0);
        let truth: Vec<Region> = grid
            .points()
            .iter()
            .map(|x| {
                if m.class_posterior(x).unwrap()[0] > 0.5 {
                    Region::R0
                } else {
                    Region::R1
                }
            })
            .collect();
        assert_eq!(a.regions, truth);
    }

    #[test]
    fn single_point_grid() {
        let m = MixtureClassModel::symmetric_unit_pair();
        let grid = EvalGrid::new(vec![vec![1.5]], vec![1.0]).unwrap();
        let o = exact_similarity(Arc::new(m));
        let a = assign_regions(&grid, &o, AnchorPolicy::MaxMargin, EXACT_BOUNDARY_TOL).unwrap();
        assert_eq!((a.anchor, a.regions[0]), (0, Region::R0));
    }

    #[test]
    fn identical_conditionals_are_unidentifiable() {
        let m = MixtureClassModel::two_gaussians(0.0, 0.0, 1.0, 0.5).unwrap();
        let grid = EvalGrid::for_model(&m, 21).unwrap();
        let o = exact_similarity(Arc::new(m));
        assert!(matches!(
            assign_regions(&grid, &o, AnchorPolicy::MaxMargin, EXACT_BOUNDARY_TOL),
            Err(Error::Unidentifiable)
        ));
        assert!(matches!(
            reconstruct_two_class(&o, &grid, &[], TwoClassOptions::for_oracle(&o)),
            Err(Error::Unidentifiable)
        ));
    }

    #[test]
    fn branch_with_no_samples_ties_to_a() {
        let c = disambiguate_branch(|_, _| 0.3, |_, _| 0.7, &[]);
        assert_eq!(
            c,
            BranchChoice {
                branch: Branch::A,
                log_ratio: 0.0,
                tie: true
            }
        );
    }

    #[test]
    fn branch_single_sample_log_ratio() {
        let s = [LabeledSample::new(0, vec![0.0])];
        let c = disambiguate_branch(
            |_, l| if l == 0 { 0.9 } else { 0.1 },
            |_, l| if l == 0 { 0.1 } else { 0.9 },
            &s,
        );
        assert_eq!(c.branch, Branch::A);
        assert_abs_diff_eq!(c.log_ratio, 9.0f64.ln(), epsilon = 1e-12);
        assert!(!c.tie);
    }

    #[test]
    fn zero_probability_eliminates_candidate() {
        let s = [
            LabeledSample::new(1, vec![0.0]),
            LabeledSample::new(0, vec![0.0]),
            LabeledSample::new(0, vec![0.0]),
        ];
        // A gives label 1 zero probability even though it fits the other samples better
        let c = disambiguate_branch(|_, l| if l == 0 { 1.0 } else { 0.0 }, |_, _| 0.5, &s);
        assert_eq!(c.branch, Branch::B);
        assert_eq!(c.log_ratio, f64::NEG_INFINITY);
    }

    #[test]
    fn branch_from_monte_carlo_samples() {
        let m = MixtureClassModel::symmetric_unit_pair();
        let samples = sample(&m, 17, 100);
        let truth = |x: &[f64], l: usize| m.class_posterior(x).unwrap()[l];
        let c = disambiguate_branch(truth, |x, l| m.class_posterior(x).unwrap()[1 - l], &samples);
        assert_eq!(c.branch, Branch::A);
        let c = disambiguate_branch(|x, l| m.class_posterior(x).unwrap()[1 - l], truth, &samples);
        assert_eq!(c.branch, Branch::B);
    }

    #[test]
    fn reconstruct_unit_pair_exactly() {
        let m = MixtureClassModel::symmetric_unit_pair();
        let grid = EvalGrid::for_model(&m, 41).unwrap();
        let o = exact_similarity(Arc::new(m.clone()));
        let r = reconstruct_two_class(
            &o,
            &grid,
            &sample(&m, 1, 200),
            TwoClassOptions::for_oracle(&o),
        )
        .unwrap();
        let post = r.posterior.as_ref().unwrap();
        for (x, p) in grid.points().iter().zip(post) {
            assert_abs_diff_eq!(*p, m.class_posterior(x).unwrap()[0], epsilon = 1e-9);
        }
        for pair in &r.candidate_pairs {
            assert_abs_diff_eq!(pair.plus + pair.minus, 1.0, epsilon = 1e-9);
        }
        // x = 0 is the only boundary point
        let boundary: Vec<usize> = (0..grid.len())
            .filter(|&i| r.regions()[i] == Region::Boundary)
            .collect();
        assert_eq!(boundary, vec![20]);
    }

    #[test]
    fn empty_samples_leave_branch_undecided() {
        let m = MixtureClassModel::symmetric_unit_pair();
        let grid = EvalGrid::for_model(&m, 11).unwrap();
        let o = exact_similarity(Arc::new(m));
        let r = reconstruct_two_class(&o, &grid, &[], TwoClassOptions::for_oracle(&o)).unwrap();
        assert_eq!(r.branch, Branch::Undecided);
        assert!(r.posterior.is_none());
        assert_eq!(r.oriented.len(), 11);
    }

    #[test]
    fn one_class_oracle() {
        let m = MixtureClassModel::new(
            vec![1.0],
            vec![vec![crate::generative::Component::isotropic(
                1.0,
                vec![0.0],
                1.0,
            )]],
        )
        .unwrap();
        let grid = EvalGrid::for_model(&m, 9).unwrap();
        let o = exact_similarity(Arc::new(m.clone()));
        let r = reconstruct_two_class(
            &o,
            &grid,
            &sample(&m, 2, 10),
            TwoClassOptions::for_oracle(&o),
        )
        .unwrap();
        assert_eq!(r.branch, Branch::A);
        assert!(r.posterior.unwrap().iter().all(|&p| p == 1.0));
    }
}
