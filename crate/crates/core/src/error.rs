use thiserror::Error;

/// Errors raised by the special functions, solvers and experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FdError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("unsupported range: {0}")]
    UnsupportedRange(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("amplification overflow at lambda={lambda}, horizon={horizon}")]
    AmplificationOverflow { lambda: f64, horizon: f64 },

    #[error("amplification overflow in modes {modes:?}; truncating to {usable_modes} modes would succeed")]
    ModeOverflow { modes: Vec<usize>, usable_modes: usize },

    #[error("Picard iteration did not converge after {} sweeps (last residual {:e})", .residuals.len(), .residuals.last().copied().unwrap_or(f64::NAN))]
    IterationFailure { residuals: Vec<f64> },

    #[error("blow-up suspected near t={time}: norm {norm:e} exceeds threshold")]
    BlowUpSuspected { time: f64, norm: f64 },

    #[error("diverging iteration: residual grew over {sweeps} consecutive sweeps")]
    DivergingIteration { sweeps: usize, residuals: Vec<f64> },

    #[error("certificate unavailable: L = {0} >= 1")]
    CertificateUnavailable(f64),

    #[error("contraction factor {factor} >= 1; use --force to run uncertified")]
    ContractionBudget { factor: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("constraint violations: {}", .0.join(", "))]
    ConstraintViolations(Vec<String>),

    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FdError>;

impl From<std::io::Error> for FdError {
    fn from(e: std::io::Error) -> Self {
        FdError::Io(e.to_string())
    }
}
