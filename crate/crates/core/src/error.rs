use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("simulation diverged at t = {time}")]
    SimulationDiverged { time: f64 },

    #[error("degenerate estimate: {0}")]
    DegenerateEstimate(String),

    #[error("missing prior: {0}")]
    MissingPrior(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("solver did not reach a verdict: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
