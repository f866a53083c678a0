use thiserror::Error;

use crate::reconstruction::MulticlassReconstruction;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported point: every class-conditional density vanishes at the query")]
    UnsupportedPoint,

    #[error("insufficient grid: probability mass coverage {coverage:.6} is below {required}")]
    InsufficientGrid { coverage: f64, required: f64 },

    #[error("no training pairs")]
    NoTrainingPairs,

    #[error("invalid bandwidth: {0}")]
    InvalidBandwidth(f64),

    #[error("invalid self-similarity: {0} is outside [1/2, 1]")]
    InvalidSelfSimilarity(f64),

    #[error("unidentifiable problem: self-similarity is 1/2 at every grid point")]
    Unidentifiable,

    #[error("invalid similarity matrix: {0}")]
    InvalidSimilarityMatrix(String),

    #[error(
        "no consistent posterior matrix: best residual {residual:.3e} exceeds {tolerance:.3e}"
    )]
    NoConsistentPosterior {
        residual: f64,
        tolerance: f64,
        best: Box<MulticlassReconstruction>,
    },

    #[error("permutation search too large: {0} classes (at most 6 supported)")]
    PermutationSearchTooLarge(usize),

    #[error("incomplete prototype set: no prototype for class {0}")]
    IncompletePrototypeSet(usize),

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("branch unresolved: no labeled samples to choose between the two reconstructions")]
    BranchUnresolved,

    #[error("impossible pair under model: both pair likelihoods vanish")]
    ImpossiblePair,

    #[error("label combination has zero probability under the model")]
    ImpossibleLabels,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
