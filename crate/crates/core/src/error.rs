use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid transform parameter: {0}")]
    InvalidTransform(String),

    #[error("negative cost {value} at ({row}, {col})")]
    NegativeCost { row: usize, col: usize, value: f64 },

    #[error("nonzero diagonal entry {value} at ({index}, {index})")]
    NonzeroDiagonal { index: usize, value: f64 },

    #[error("index ({row}, {col}) out of range for {n} classes")]
    IndexOutOfRange { row: usize, col: usize, n: usize },

    #[error("class index {index} out of range for {n} classes")]
    ClassOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },

    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),

    #[error("mass mismatch: source {source_mass}, target {target_mass}")]
    MassMismatch { source_mass: f64, target_mass: f64 },

    #[error("non-finite value {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("malformed csv at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("{message}")]
    Invalid { message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid {
            message: message.into(),
        }
    }
}
