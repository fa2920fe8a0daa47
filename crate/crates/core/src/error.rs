use thiserror::Error;

/// Failure modes shared by every solver in the crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DrroError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error("problem is unbounded: {0}")]
    Unbounded(String),
    #[error("numerical failure ({status}): primal residual {r_prim:.3e}, dual residual {r_dual:.3e}")]
    NumericalFailure {
        status: String,
        r_prim: f64,
        r_dual: f64,
    },
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),
}

pub type Result<T> = std::result::Result<T, DrroError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(DrroError::InvalidArgument(msg.into()))
}
