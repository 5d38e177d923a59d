use thiserror::Error;

/// Errors raised by the flow laboratory.
#[derive(Debug, Error)]
pub enum Error {
    /// The metric density dropped to or below the positivity floor.
    #[error("state left the Kähler cone: min density {min:e} <= floor {floor:e}")]
    NonKahler { min: f64, floor: f64 },

    #[error("time step {dt:e} below dt_min {dt_min:e}")]
    StepTooSmall { dt: f64, dt_min: f64 },

    #[error("Poisson solve did not reach tolerance: residual {residual:e}")]
    SolverFailure { residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("invalid configuration: {0}")]
    BadConfig(String),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable class name, used by the CLI.
    pub fn class(&self) -> &'static str {
        match self {
            Error::NonKahler { .. } => "non_kahler",
            Error::StepTooSmall { .. } => "step_too_small",
            Error::SolverFailure { .. } => "solver_failure",
            Error::Domain(_) => "domain",
            Error::BadParams(_) => "bad_params",
            Error::BadConfig(_) => "bad_config",
            Error::VersionMismatch { .. } => "version_mismatch",
            Error::SchemaMismatch(_) => "schema_mismatch",
            Error::CorruptFile(_) => "corrupt_file",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
