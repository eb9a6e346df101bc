use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("query {0:?} lies outside the field domain")]
    Domain([f64; 2]),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("anchor position {0:?} matches no delta endpoint")]
    Anchoring([f64; 2]),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
