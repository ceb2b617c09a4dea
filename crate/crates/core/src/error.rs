use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("root solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    RootSolver { iterations: usize, residual: f64 },
    #[error("singular linear part (determinant {det:.3e})")]
    Singular { det: f64 },
    #[error("ill-conditioned at bidegree ({i},{j}) component {component}: divisor {divisor:.3e}")]
    IllConditioned { i: usize, j: usize, component: usize, divisor: f64 },
    #[error("point is an indeterminacy of the lift (|F| = {norm:.3e})")]
    Indeterminate { norm: f64 },
    #[error("chart {chart} undefined at point")]
    Chart { chart: usize },
    #[error("{0} requires skew-product metadata")]
    NotSkew(&'static str),
    #[error("not repelling: multiplier modulus {modulus:.6}")]
    NotRepelling { modulus: f64 },
    #[error("start point lies in the exceptional set: {0}")]
    Exceptional(String),
    #[error("budget '{name}' exceeded: needs {needed}, limit {limit}")]
    Budget { name: &'static str, needed: u64, limit: u64 },
    #[error("depth cap {cap} reached with achieved error {achieved:.3e}")]
    DepthCap { cap: usize, achieved: f64 },
    #[error("Newton iteration failed: {0}")]
    Newton(String),
    #[error("path lifting aborted at t = {t:.6}: {reason}")]
    PathLift { t: f64, reason: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown map '{0}'")]
    UnknownMap(String),
    #[error("{0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
