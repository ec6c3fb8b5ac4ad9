use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    /// A parameter set failed one of its stated constraints.
    #[error("invalid parameters: {constraint}")]
    Validation { constraint: String },

    /// A measurement schedule is incompatible with the overlaps it targets.
    #[error("measurement constraint violated ({bound}): {detail}")]
    Constraint { bound: String, detail: String },

    #[error("Gram matrix is singular or degenerate: {0}")]
    SingularGram(String),

    #[error("precondition requires relabeling the two states: {0}")]
    Relabel(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("probability `{name}` = {value:e} outside [0, 1]; {dump}")]
    ProbabilityOutOfRange {
        name: String,
        value: f64,
        dump: String,
    },

    #[error("no admissible root: {0}")]
    NoRoot(String),

    #[error("bracketing failed: {reason}; scan: {trace}")]
    Bracketing { reason: String, trace: String },

    #[error("empty feasible set: {0}")]
    EmptyFeasibleSet(String),

    #[error("unknown identifier `{0}`")]
    UnknownId(String),
}

impl Error {
    pub(crate) fn validation(constraint: impl Into<String>) -> Self {
        Error::Validation {
            constraint: constraint.into(),
        }
    }

    pub(crate) fn constraint(bound: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Constraint {
            bound: bound.into(),
            detail: detail.into(),
        }
    }
}
