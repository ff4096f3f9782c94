use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value is out of its valid range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Requested weight lies outside `[w_min, w_max)`.
    #[error("target weight {weight} outside [{w_min}, {w_max})")]
    WeightDomain { weight: f64, w_min: f64, w_max: f64 },

    #[error("frame has {got} channels, detector has {expected}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error("no target periods in evaluation window; R is undefined")]
    EmptyTargets,

    #[error("non-finite value {0} cannot be binned")]
    NonFinite(f64),

    #[error("velocity calibration failed: {0}")]
    Calibration(String),

    #[error("record spans {have} steps, evaluation window needs {need}")]
    RecordTooShort { have: u64, need: u64 },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors caused by the filesystem rather than by input values.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
