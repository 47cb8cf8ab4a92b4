use thiserror::Error;

/// Errors raised by the component models, the identification engine and the
/// plant simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid sample {index}: {reason}")]
    InvalidSample { index: usize, reason: String },

    #[error("degenerate fit (rank {rank} of {columns}): deficient directions {directions:?}")]
    DegenerateFit {
        rank: usize,
        columns: usize,
        directions: Vec<String>,
    },

    #[error("insufficient tank temperature: tank {tank:.3} °C vs HVAC feed {hvac:.3} °C")]
    InsufficientTankTemperature { tank: f64, hvac: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing configuration keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("numerical divergence in {location} at t = {time:.1} s")]
    Divergence { location: String, time: f64 },

    #[error("degenerate range: measured maximum equals minimum")]
    DegenerateRange,

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

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

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}
