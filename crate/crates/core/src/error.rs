use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatvolError {
    #[error("bond direction must be nonzero")]
    ZeroDirection,

    #[error("direction ({0}) is not primitive: gcd of its components must be 1")]
    NonPrimitiveDirection(String),

    #[error("edge vector is parallel to the bond direction; pulled-back angle undefined")]
    ParallelToDirection,

    #[error("enumeration budget exceeded: {needed} lattice points > {budget}")]
    BudgetExceeded { needed: u64, budget: u64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("mesh does not tile the continuum region: {0}")]
    MeshTiling(String),

    #[error("negative effective volume {value:e} for tet {tet}, direction {dir:?}")]
    NegativeVolume { tet: usize, dir: [i64; 3], value: f64 },

    #[error("atoms closer than {min:e}: |z| = {dist:e}")]
    Singularity { min: f64, dist: f64 },

    #[error("effective volume table missing or of wrong size")]
    MissingVolumes,

    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = LatvolError> = std::result::Result<T, E>;
