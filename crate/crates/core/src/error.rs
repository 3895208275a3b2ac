use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid chain: {0}")]
    InvalidChain(String),
    #[error("invalid coupling profile: {0}")]
    InvalidProfile(String),
    #[error("invalid block: {0}")]
    InvalidBlock(String),
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),
    #[error("degenerate ground state: mode {index} has energy {value:e}, below threshold {threshold:e}")]
    DegenerateGroundState { index: usize, value: f64, threshold: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("physicality violation: {0}")]
    PhysicalityViolation(String),
    #[error("dense Hilbert space too large: {n_sites} sites exceeds the limit of {limit}")]
    TooLarge { n_sites: usize, limit: usize },
    #[error("first-order matrix on the degenerate subspace does not vanish (max |V_mm'| = {0:e})")]
    FirstOrderNotZero(f64),
    #[error("invalid subspace: {0}")]
    InvalidSubspace(String),
    #[error("fit underdetermined: {0}")]
    FitUnderdetermined(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
