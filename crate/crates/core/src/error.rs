use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = S2sError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum S2sError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("unknown label: token `{token}` of `{label}` is not in the table")]
    UnknownLabel { label: String, token: String },

    #[error("capacity error: {labels} labels do not fit in {dim} dimensions")]
    Capacity { labels: usize, dim: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("split infeasible: verb `{verb}` has {count} object(s), need at least 2")]
    SplitInfeasible { verb: String, count: usize },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("loss error: {0}")]
    Loss(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: u64, loss: f64 },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl S2sError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        S2sError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attach a path to an `std::io::Result`.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|e| S2sError::io(path, e))
    }
}
