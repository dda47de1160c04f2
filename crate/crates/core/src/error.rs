use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("operator is not Hermitian (relative deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is singular for an inverse power (min eigenvalue {min_eigenvalue:e})")]
    SingularOperator { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("POVM element {index} is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { index: usize, min_eigenvalue: f64 },

    #[error("elements do not resolve the identity (deficit norm {deficit:e})")]
    NotResolution { deficit: f64 },

    #[error("element is not an effect (eigenvalues outside [0, 1]: {min_eigenvalue:e}..{max_eigenvalue:e})")]
    NotEffect { min_eigenvalue: f64, max_eigenvalue: f64 },

    #[error("Gram operator is singular (min eigenvalue {min_eigenvalue:e})")]
    SingularGram { min_eigenvalue: f64 },

    #[error("sampled effects do not span the operator space (smallest singular value {smallest_singular:e}, residual {residual:e})")]
    DegenerateSpan { smallest_singular: f64, residual: f64 },

    #[error("not a density operator: {reason}")]
    NotAState { reason: String },

    #[error("not a probability distribution: {reason}")]
    NotADistribution { reason: String },

    #[error("observed data has zero probability")]
    ZeroProbabilityData,

    #[error("operator is not unitary (deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("map is not completely positive (Choi min eigenvalue {min_eigenvalue:e})")]
    NotCp { min_eigenvalue: f64 },

    #[error("map is not trace preserving (deviation {deviation:e})")]
    NotTracePreserving { deviation: f64 },

    #[error("amplitudes are not normalised (|alpha|^2 + |beta|^2 = {norm})")]
    NotNormalized { norm: f64 },

    #[error("refinement does not average to the state (deviation {deviation:e})")]
    InconsistentRefinement { deviation: f64 },

    #[error("state is rank deficient (min eigenvalue {min_eigenvalue:e})")]
    RankDeficientState { min_eigenvalue: f64 },

    #[error("joint dimension {dim} exceeds the budget of {budget}")]
    DimensionBudgetExceeded { dim: usize, budget: usize },

    #[error("every support point assigns zero likelihood to the data")]
    ZeroLikelihoodEverywhere,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
