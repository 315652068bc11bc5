use thiserror::Error;

/// Errors raised by every layer of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("negative time {0}")]
    NegativeTime(f64),

    #[error("invalid space: {0}")]
    InvalidSpace(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("time {t} is not a grid point (dt = {dt})")]
    OffGrid { t: f64, dt: f64 },

    #[error("paths live on different grids")]
    GridMismatch,

    #[error("epsilon {eps} is not a positive integer multiple of dt = {dt}")]
    EpsilonNotOnGrid { eps: f64, dt: f64 },

    #[error("invalid epsilon ladder: {0}")]
    InvalidLadder(String),

    #[error("unknown estimator `{0}`")]
    UnknownEstimator(String),

    #[error("unknown test function `{0}`")]
    UnknownTestFunction(String),

    #[error(
        "Lipschitz spot-check failed: observed ratio {ratio} exceeds declared constant {constant}"
    )]
    LipschitzViolation { ratio: f64, constant: f64 },

    #[error("non-finite state at step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },

    #[error("control with norm {norm} lies outside the admissible ball of radius {radius}")]
    ControlOutsideSet { norm: f64, radius: f64 },

    #[error("non-finite cost in Hamiltonian evaluation")]
    NonFiniteCost,

    #[error("value candidate has no second derivative but is not affine in x")]
    MissingHessian,

    #[error("argmin of the Hamiltonian is not single-valued at t = {t}")]
    AmbiguousArgmin { t: f64 },

    #[error("reference problem needs |h| <= R, got |h| = {h_norm}, R = {radius}")]
    ReferenceOutOfScope { h_norm: f64, radius: f64 },

    /// `line` is 1-based; 0 marks errors not tied to a line.
    #[error("config error{}: {message}", if *line > 0 { format!(" at line {line}") } else { String::new() })]
    Config { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
