//! Recovering class posteriors from a similarity oracle.
//!
//! [`two_class`] inverts the self-similarity `s(x, x) = p² + (1 - p)²` pointwise
//! and stitches the per-point sign choices together through decision-region
//! membership, leaving one global flip to be settled by labeled samples.
//! [`multiclass`] solves the finite Gram system `s_ij = Σ_k p_ki p_kj` for
//! simplex-constrained columns and settles the label permutation the same way.

pub mod multiclass;
pub mod two_class;

pub use multiclass::{
    disambiguate_permutation, forward_similarity, solve_multiclass, LabeledColumn,
    MulticlassOptions, MulticlassReconstruction, PermutationChoice,
};
pub use two_class::{
    assign_regions, disambiguate_branch, posterior_pair_from_self_similarity,
    posterior_pair_with_clamp, reconstruct_two_class, same_region, AnchorPolicy, Branch,
    BranchChoice, MarginSource, PosteriorPair, Region, RegionAssignment, SameRegion,
    TwoClassOptions, TwoClassReconstruction,
};
