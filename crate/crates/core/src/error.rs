use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("schema error: unknown column `{0}`")]
    UnknownColumn(String),
    #[error("schema error: column `{column}` found at position {found}, expected position {expected}")]
    ColumnOrder {
        column: String,
        found: usize,
        expected: usize,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("{0}: input contains no data rows")]
    Empty(PathBuf),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("parameter domain error: {0}")]
    ParameterDomain(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("perfect separation detected after {iterations} IRLS iterations")]
    Separation { iterations: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("insufficient donor pool: {got} donors, at least {need} required")]
    InsufficientPool { got: usize, need: usize },
    #[error("failed to open {path}: {source}")]
    Open {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
