use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("non-finite matrix entry")]
    NonFinite,

    #[error("element {index} is not positive-semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { index: usize, min_eigenvalue: f64 },

    #[error("elements do not sum to the identity (residual {residual:e})")]
    Incomplete { residual: f64 },

    #[error("POVM has no elements")]
    Empty,

    #[error("label count {labels} does not match element count {elements}")]
    LabelMismatch { labels: usize, elements: usize },

    #[error("singular operator: eigenvalue {eigenvalue:e}")]
    SingularEigenvalue { eigenvalue: f64 },

    #[error("singular operator: |det| = {det:e}")]
    SingularMatrix { det: f64 },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dependence witness inconsistent with POVM (residual {residual:e})")]
    InconsistentWitness { residual: f64 },

    #[error("decomposition exceeded depth {depth}")]
    DepthExceeded { depth: usize },

    #[error("all elements proportional to identity (1 - sum b = {gap:e})")]
    AllIdentity { gap: f64 },

    #[error("walk needs 2 to 4 linearly independent projective elements, got {0}")]
    WalkSize(usize),

    #[error("walk elements are linearly dependent")]
    DependentElements,

    #[error("mixture Bloch vector on the sphere (|r| = {norm}); walk should have terminated")]
    DegenerateMixture { norm: f64 },

    #[error("step-length bracket failure: lhs(upper) = {lhs_upper}, rhs = {rhs}")]
    Bracket { lhs_upper: f64, rhs: f64 },

    #[error("step weights not positive: {weights:?}")]
    Geometry { weights: Vec<f64> },

    #[error("current position coincides with vertex {0}")]
    AtVertex(usize),

    #[error("target operator not positive (min eigenvalue {min_eigenvalue:e})")]
    TargetNotPositive { min_eigenvalue: f64 },

    #[error("operator outside the destructive family (residual {residual:e})")]
    ConstraintViolation { residual: f64 },

    #[error("ancilla weight s = {s} outside (0, 1]")]
    AncillaScaling { s: f64 },

    #[error("point outside the image polytope (coordinate {coordinate:e})")]
    OutsidePolytope { coordinate: f64 },

    #[error("simplex map rank {rank}, expected {expected}")]
    Rank { rank: usize, expected: usize },

    #[error("outcome {outcome} has zero probability on this branch")]
    ZeroProbability { outcome: usize },

    #[error("outcome index {index} out of range for {n} outcomes")]
    OutcomeIndex { index: usize, n: usize },

    #[error("oracle would enumerate {strings} strings (limit {limit})")]
    OracleGuard { strings: f64, limit: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),
}
