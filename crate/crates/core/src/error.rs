use thiserror::Error;

/// Errors raised while constructing or validating model objects.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid array geometry: {0}")]
    Geometry(String),
    #[error("invalid partition: {0}")]
    Partition(String),
    #[error("invalid steering direction: {0}")]
    Direction(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid channel matrix: {0}")]
    Channel(String),
}

/// Errors raised while reading or writing channel files.
#[derive(Debug, Error)]
pub enum ChannelFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty matrix rejected")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ChannelFileError {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        ChannelFileError::Parse { line, message: message.into() }
    }
}

/// Failure modes of the beamforming designers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("P_max unattainable for this geometry/channel/direction")]
    Infeasible,
    #[error("numerical failure in conic solver: {0}")]
    NumericalFailure(String),
    #[error("rank refinement requires a solved starting point")]
    NotSolved,
    #[error("brute-force enumeration needs cap {required}, configured cap is {cap}")]
    CapExceeded { required: String, cap: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}
