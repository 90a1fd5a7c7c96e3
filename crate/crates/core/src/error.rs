//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Incompatible operand shapes; names the operation and both shapes.
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A value that must be finite was NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Training produced a non-finite loss.
    #[error("training diverged (non-finite loss) at step {step}")]
    Diverged { step: usize },

    /// Checkpoint/container problems: bad magic, truncation, version drift.
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),

    /// IDX file with an unexpected magic number.
    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    IdxMagic {
        path: String,
        expected: u32,
        found: u32,
    },

    /// CSV row whose field count differs from the header.
    #[error("ragged CSV row {row} in {path}: expected {expected} fields, found {found}")]
    RaggedRow {
        path: String,
        row: usize,
        expected: usize,
        found: usize,
    },

    /// CSV cell that does not parse as a number.
    #[error("non-numeric cell at row {row}, column {col} in {path}: {text:?}")]
    BadNumber {
        path: String,
        row: usize,
        col: usize,
        text: String,
    },

    #[error("unknown class {0} (no samples after filtering)")]
    EmptyClass(usize),

    #[error("unknown task id {0}")]
    UnknownTask(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}
