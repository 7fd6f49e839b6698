//! Error types shared across the toolkit.

use thiserror::Error;

/// Condition-number gate above which a matrix is treated as singular.
pub const SINGULARITY_LIMIT: f64 = 1e12;

#[derive(Debug, Error)]
pub enum Error {
    #[error("system matrix is numerically singular (condition estimate {cond:.3e} > {SINGULARITY_LIMIT:.0e})")]
    SingularMass { cond: f64 },

    #[error("{block} block is numerically singular (condition estimate {cond:.3e} > {SINGULARITY_LIMIT:.0e})")]
    SingularBlock { block: &'static str, cond: f64 },

    #[error("decoupling block is numerically singular (condition estimate {cond:.3e} > {SINGULARITY_LIMIT:.0e})")]
    SingularDecoupling { cond: f64 },

    #[error("matrix is not symmetric: |M - M^T| = {residual:.3e} exceeds {tol:.0e}")]
    AsymmetricMatrix { residual: f64, tol: f64 },

    #[error("input vector fields are rank deficient: rank {rank} < {expected}")]
    RankDeficientInputs { rank: usize, expected: usize },

    #[error("output {output} has no relative degree within k_max = {k_max}")]
    NoRelativeDegree { output: usize, k_max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("field evaluation failed: {0}")]
    EvaluationFailure(String),

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("integration aborted at t = {t}: {source}")]
    IntegrationAbort { t: f64, source: Box<Error> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 usage/config, 2 assumption/invariant
    /// failure, 3 runtime integration failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::IntegrationAbort { .. } => 3,
            Error::SingularMass { .. }
            | Error::SingularBlock { .. }
            | Error::SingularDecoupling { .. }
            | Error::AsymmetricMatrix { .. }
            | Error::RankDeficientInputs { .. }
            | Error::NoRelativeDegree { .. } => 2,
            _ => 1,
        }
    }
}
