use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tree description is empty")]
    EmptyTree,
    #[error("cycle or repeated parent detected at vertex {0}")]
    CycleDetected(usize),
    #[error("vertex {0} is not connected to the root")]
    DisconnectedVertex(usize),
    #[error("child index {index} out of range for {len} vertices")]
    InvalidIndex { index: usize, len: usize },
    #[error("degree at level {0} must be at least 1")]
    ZeroDegree(usize),
    #[error("Galton-Watson tree died out before depth {0}")]
    Extinct(usize),
    #[error("{what} needs {needed} units, budget is {budget}")]
    BudgetExceeded { what: &'static str, needed: u128, budget: u128 },
    #[error("vertex {0} is not a leaf at maximal depth")]
    NotALeaf(usize),
    #[error("tree height must be at least 1")]
    ZeroHeight,

    #[error("interval specification is empty")]
    EmptySpec,
    #[error("interval [{0}, {1}] has reversed or non-finite endpoints")]
    ReversedInterval(f64, f64),
    #[error("digit set is empty")]
    EmptyDigitSet,
    #[error("invalid Cantor generator: {0}")]
    InvalidGenerator(String),
    #[error("resolution {resolution} is too coarse for an interval of length {length}")]
    ResolutionTooCoarse { resolution: f64, length: f64 },
    #[error("degenerate scales for box counting: {0}")]
    DegenerateScales(String),
    #[error("target set is empty")]
    EmptyTarget,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel is singular at zero time gap")]
    ZeroTimeGap,
    #[error("singular kernel evaluated on atomic time cells")]
    SingularDiagonal,
    #[error("measure is not on the probability simplex: {0}")]
    NotASimplex(String),
    #[error("target has no Cantor generator")]
    MissingGenerator,
    #[error("kernel matrix is invalid: {0}")]
    InvalidMatrix(String),

    #[error("measure does not match the kernel matrix: {0}")]
    DimensionMismatch(String),
    #[error("minimization did not converge: gap {gap:e} after {iterations} iterations")]
    NotConverged { gap: f64, iterations: usize },
    #[error("delta {delta} exceeds Delta {big_delta}")]
    OrderViolation { delta: f64, big_delta: f64 },

    #[error("simulation run does not belong to this tree: {0}")]
    MismatchedRun(String),
    #[error("target extends to {sup}, past the horizon {horizon}")]
    HorizonExceeded { sup: f64, horizon: f64 },
    #[error("no trace hit the target")]
    NoHits,

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::ConfigInvalid(e.to_string())
    }
}
