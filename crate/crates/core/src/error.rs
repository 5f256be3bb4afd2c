use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("mesh integrity error: {0}")]
    MeshIntegrity(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("singular metric: {0}")]
    SingularMetric(String),

    #[error("point {point:?} lies outside the background mesh")]
    OutOfDomain { point: Vec<f64> },

    #[error("point location failed: {0}")]
    Location(String),

    #[error("invalid mesh: elements {elements:?} have non-positive Jacobians")]
    InvalidMesh { elements: Vec<usize> },

    #[error("solver failure: {0}")]
    Solver(String),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
