use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

pub const MAX_PERMUTATION_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MulticlassOptions {
    pub restarts: usize,
    pub max_iterations: usize,
    /// Stop once the projected-gradient step `‖P - Π(P - ∇f)‖_F` falls below this.
    pub gradient_tol: f64,
    /// Defaults to `1e-4 · n`.
    pub residual_tol: Option<f64>,
    pub seed: u64,
}

impl Default for MulticlassOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            max_iterations: 10_000,
            gradient_tol: 1e-10,
            residual_tol: None,
            seed: 0,
        }
    }
}

/// Simplex-constrained solution of the Gram system `s_ij = Σ_k p_ki p_kj`.
#[derive(Debug, Clone, PartialEq)]
pub struct MulticlassReconstruction {
    /// `c × n`; column `j` is the posterior vector at point `j`.
    pub p_matrix: DMatrix<f64>,
    /// `‖S - PᵀP‖_F`
    pub residual: f64,
    pub permutation_resolved: bool,
    /// Index of the restart that produced this solution.
    pub restart: usize,
    pub iterations: usize,
}

/// `PᵀP`: the similarity matrix implied by a posterior matrix.
pub fn forward_similarity(p: &DMatrix<f64>) -> DMatrix<f64> {
    p.transpose() * p
}

fn objective(p: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    (forward_similarity(p) - s).norm_squared()
}

/// Euclidean projection of `v` onto the probability simplex.
pub(crate) fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

fn project_columns(p: &mut DMatrix<f64>) {
    for mut col in p.column_iter_mut() {
        project_simplex(col.as_mut_slice());
    }
}

fn validate(s: &DMatrix<f64>, c: usize) -> Result<()> {
    let n = s.nrows();
    if c == 0 {
        return Err(Error::InvalidArgument(
            "class count must be positive".into(),
        ));
    }
    if s.ncols() != n {
        return Err(Error::InvalidSimilarityMatrix(format!(
            "{}×{} is not square",
            n,
            s.ncols()
        )));
    }
    if n < 2 * c - 1 {
        return Err(Error::InvalidSimilarityMatrix(format!(
            "{n} points cannot determine {c} classes (need at least {})",
            2 * c - 1
        )));
    }
    for i in 0..n {
        for j in 0..n {
            let v = s[(i, j)];
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSimilarityMatrix(format!(
                    "entry ({i},{j}) = {v} outside [0,1]"
                )));
            }
            if (v - s[(j, i)]).abs() > 1e-9 {
                return Err(Error::InvalidSimilarityMatrix(format!(
                    "not symmetric at ({i},{j})"
                )));
            }
        }
        if s[(i, i)] < 1.0 / c as f64 - 1e-9 {
            return Err(Error::InvalidSimilarityMatrix(format!(
                "diagonal entry {i} = {} below 1/c",
                s[(i, i)]
            )));
        }
    }
    Ok(())
}

/// Householder reflection taking unit vector `from` to unit vector `to`.
fn reflection(from: &DVector<f64>, to: &DVector<f64>) -> DMatrix<f64> {
    let c = from.len();
    let w = from - to;
    let norm2 = w.norm_squared();
    if norm2 < 1e-24 {
        return DMatrix::identity(c, c);
    }
    DMatrix::identity(c, c) - (&w * w.transpose()) * (2.0 / norm2)
}

/// Random orthogonal map that fixes `axis` (a unit vector).
fn random_rotation_about(axis: &DVector<f64>, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let c = axis.len();
    if c < 2 {
        return DMatrix::identity(c, c);
    }
    // columns 1..c of a reflection sending e_0 to the axis span its complement
    let mut e0 = DVector::zeros(c);
    e0[0] = 1.0;
    let h = reflection(&e0, axis);
    let basis = h.columns(1, c - 1).into_owned();
    let g = DMatrix::from_fn(c - 1, c - 1, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..c - 1 {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    axis * axis.transpose() + &basis * q * basis.transpose()
}

/// Top-`c` factor of `s` rotated so that its columns sum to one as nearly as
/// possible, before the per-restart rotation and simplex projection.
fn spectral_start(s: &DMatrix<f64>, c: usize) -> (DMatrix<f64>, DVector<f64>) {
    let n = s.nrows();
    let eig = s.clone().symmetric_eigen();
    let order: Vec<usize> = (0..n)
        .sorted_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]))
        .collect();
    let mut factor = DMatrix::zeros(c, n);
    let mut v = DVector::zeros(c);
    let ones = DVector::from_element(n, 1.0);
    for (k, &idx) in order.iter().take(c).enumerate() {
        let lambda = eig.eigenvalues[idx].max(0.0);
        let u = eig.eigenvectors.column(idx);
        factor
            .row_mut(k)
            .copy_from(&(u.transpose() * lambda.sqrt()));
        if lambda > 1e-12 {
            v[k] = u.dot(&ones) / lambda.sqrt();
        }
    }
    let target = DVector::from_element(c, 1.0 / (c as f64).sqrt());
    let align = if v.norm() > 1e-12 {
        reflection(&v.normalize(), &target)
    } else {
        DMatrix::identity(c, c)
    };
    (align * factor, target)
}

struct Descent {
    p: DMatrix<f64>,
    objective: f64,
    iterations: usize,
}

fn projected_gradient(
    s: &DMatrix<f64>,
    mut p: DMatrix<f64>,
    options: &MulticlassOptions,
) -> Descent {
    let mut f = objective(&p, s);
    let mut step = 0.25;
    let mut iterations = 0;
    while iterations < options.max_iterations {
        iterations += 1;
        let grad = &p * (forward_similarity(&p) - s) * 4.0;

        let mut unit = &p - &grad;
        project_columns(&mut unit);
        if (&unit - &p).norm() <= options.gradient_tol {
            break;
        }

        let mut accepted = None;
        for _ in 0..60 {
            let mut candidate = &p - &grad * step;
            project_columns(&mut candidate);
            let delta = &candidate - &p;
            let fc = objective(&candidate, s);
            if fc <= f + grad.dot(&delta) + delta.norm_squared() / (2.0 * step) {
                accepted = Some((candidate, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, fc)) = accepted else {
            break;
        };
        let stalled = f - fc <= f64::EPSILON * f;
        p = candidate;
        f = fc;
        step = (step * 2.0).min(1e3);
        if stalled || f == 0.0 {
            break;
        }
    }
    Descent {
        p,
        objective: f,
        iterations,
    }
}

/// Least-squares posterior matrix for a similarity matrix, best of
/// `options.restarts` projected-gradient runs. Restart 0 starts from the
/// aligned spectral factor itself; the others rotate it randomly about the
/// all-ones direction first.
///
/// A best residual above the tolerance is reported as
/// [`Error::NoConsistentPosterior`], which carries the best solution found.
pub fn solve_multiclass(
    s: &DMatrix<f64>,
    c: usize,
    options: &MulticlassOptions,
) -> Result<MulticlassReconstruction> {
    validate(s, c)?;
    let n = s.nrows();
    let (start, axis) = spectral_start(s, c);
    let restarts = options.restarts.max(1);
    let runs: Vec<(usize, Descent)> = (0..restarts)
        .into_par_iter()
        .map(|k| {
            let mut p = if k == 0 {
                start.clone()
            } else {
                let mut r = rng::stream(options.seed, Purpose::Restarts, k as u64);
                random_rotation_about(&axis, &mut r) * &start
            };
            project_columns(&mut p);
            (k, projected_gradient(s, p, options))
        })
        .collect();
    let (restart, best) = runs
        .into_iter()
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective).then(a.0.cmp(&b.0)))
        .expect("at least one restart");

    let solution = MulticlassReconstruction {
        residual: best.objective.max(0.0).sqrt(),
        p_matrix: best.p,
        permutation_resolved: false,
        restart,
        iterations: best.iterations,
    };
    let tolerance = options.residual_tol.unwrap_or(1e-4 * n as f64);
    if solution.residual > tolerance {
        return Err(Error::NoConsistentPosterior {
            residual: solution.residual,
            tolerance,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

/// A labeled sample located at column `column` of a posterior matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledColumn {
    pub column: usize,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermutationChoice {
    /// Row `i` of the relabeled matrix is row `permutation[i]` of the input.
    pub permutation: Vec<usize>,
    pub log_likelihood: f64,
    /// Set when no samples were given or the maximum was not unique.
    pub warning: bool,
}

/// Relabels the rows of `solution` by the class permutation under which the
/// labeled samples are most likely. All `c!` permutations are scored; ties go
/// to the first in lexicographic order, starting from the identity.
pub fn disambiguate_permutation(
    solution: &MulticlassReconstruction,
    samples: &[LabeledColumn],
) -> Result<(MulticlassReconstruction, PermutationChoice)> {
    let (c, n) = solution.p_matrix.shape();
    if c > MAX_PERMUTATION_CLASSES {
        return Err(Error::PermutationSearchTooLarge(c));
    }
    for s in samples {
        if s.column >= n || s.label >= c {
            return Err(Error::InvalidArgument(format!(
                "sample at column {} with label {} outside {c}×{n} solution",
                s.column, s.label
            )));
        }
    }
    if samples.is_empty() {
        let choice = PermutationChoice {
            permutation: (0..c).collect(),
            log_likelihood: 0.0,
            warning: true,
        };
        return Ok((solution.clone(), choice));
    }

    let log_likelihood = |perm: &[usize]| -> f64 {
        samples
            .iter()
            .map(|s| solution.p_matrix[(perm[s.label], s.column)].ln())
            .sum()
    };
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut ties = 0;
    for perm in (0..c).permutations(c) {
        let ll = log_likelihood(&perm);
        match &best {
            Some((_, b)) if ll < *b => {}
            Some((_, b)) if ll == *b => ties += 1,
            _ => {
                best = Some((perm, ll));
                ties = 0;
            }
        }
    }
    let (permutation, ll) = best.expect("at least one permutation");
    let mut relabeled = solution.clone();
    for (i, &src) in permutation.iter().enumerate() {
        relabeled
            .p_matrix
            .row_mut(i)
            .copy_from(&solution.p_matrix.row(src));
    }
    relabeled.permutation_resolved = true;
    Ok((
        relabeled,
        PermutationChoice {
            permutation,
            log_likelihood: ll,
            warning: ties > 0,
        },
    ))
}
