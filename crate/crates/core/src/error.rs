use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("largest eigenvalue {lambda:.3e} is not positive; the potential has no positive eigenvalue")]
    NoPositiveEigenvalue { lambda: f64 },

    #[error("{what} did not converge after {iterations} iterations (last change {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("far-field constant C({direction:?}) = {value:.3e} is not positive")]
    NonPositiveConstant { direction: Vec<f64>, value: f64 },

    #[error("grid and far-field branches of the ground state disagree by {mismatch:.3e} on the handover shell")]
    HandoverMismatch { mismatch: f64 },

    #[error("grid too small: boundary value {boundary:.3e} exceeds {limit:.3e} at t = {time}")]
    GridTooSmall {
        time: f64,
        boundary: f64,
        limit: f64,
    },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("query ({what}) out of range: {value} not in [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("theta = {theta} is too small: need theta > {threshold}")]
    ThetaTooSmall { theta: f64, threshold: f64 },

    #[error("kernel covers s <= {covered} but the tail bound needs s up to {needed}")]
    KernelTooShort { covered: f64, needed: f64 },

    #[error("omega = {omega} is too small for the tail bound (need omega > 2)")]
    OmegaTooSmall { omega: f64 },

    #[error("non-positive value {value:.3e} at probe {probe}")]
    NonPositive { probe: String, value: f64 },

    #[error("length mismatch: {left} oracle values vs {right} formula values")]
    LengthMismatch { left: usize, right: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{regime} sweep point t = {t}, x = {x:?}: {source}")]
    AtPoint {
        regime: String,
        t: f64,
        x: Vec<f64>,
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
