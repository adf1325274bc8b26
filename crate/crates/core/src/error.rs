use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in <{element}>: {message}")]
    Parse { element: String, message: String },

    #[error("malformed xml: {0}")]
    Xml(#[from] roxmltree::Error),

    #[error("joint value {value} outside limits [{lower}, {upper}]")]
    OutOfLimits { value: f64, lower: f64, upper: f64 },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("axis estimation failed: {0}")]
    Estimation(String),

    #[error("no contact candidate: observation mask is empty")]
    NoContact,

    #[error("length mismatch: expected {expected} points, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("{file} row {row}: {message}")]
    Format {
        file: &'static str,
        row: usize,
        message: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(element: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            element: element.into(),
            message: message.into(),
        }
    }
}
