//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI reports them: usage and configuration
//! problems exit with code 2, data problems with 3, numerical failures with 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    // Usage / configuration.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    // Data.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("treatment indicator must be 0 or 1 (unit {unit} has {value})")]
    NonBinaryTreatment { unit: usize, value: f64 },
    #[error("propensity out of range at unit {unit}: {value}")]
    PropensityOutOfRange { unit: usize, value: f64 },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("too few draws: {0}")]
    InsufficientDraws(String),
    #[error("too few units: {0}")]
    TooFewUnits(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    // Numerics.
    #[error("matrix is not symmetric: {0}")]
    AsymmetricInput(String),
    #[error("matrix not factorizable after jitter escalation (last jitter {last_jitter:e})")]
    NotFactorizable { last_jitter: f64 },
    #[error("kernel matrix is not positive semidefinite: {0}")]
    NotPSD(String),
    #[error("non-positive parameter: {0}")]
    NonPositiveParameter(String),
    #[error("singular design matrix in logistic fit")]
    SingularDesign,
    #[error("non-finite log density ({0})")]
    NonFiniteLogDensity(String),
    #[error("factorization failure during sampling: {0}")]
    FactorizationFailure(String),

    /// Wraps another error with where it happened (sweep number, chain id);
    /// the exit code is the wrapped error's.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            InvalidArgument(_) | ConfigInvalid(_) => 2,
            EmptyDataset(_)
            | DimensionMismatch(_)
            | NonBinaryTreatment { .. }
            | PropensityOutOfRange { .. }
            | MissingColumn(_)
            | InsufficientDraws(_)
            | TooFewUnits(_)
            | Io { .. }
            | Parse { .. } => 3,
            AsymmetricInput(_)
            | NotFactorizable { .. }
            | NotPSD(_)
            | NonPositiveParameter(_)
            | SingularDesign
            | NonFiniteLogDensity(_)
            | FactorizationFailure(_) => 4,
            Context { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }

    pub(crate) fn context(context: impl Into<String>, source: Error) -> Self {
        Error::Context { context: context.into(), source: Box::new(source) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
