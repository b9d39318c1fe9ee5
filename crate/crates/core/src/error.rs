use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("coordinate ({row}, {col}) outside {rows}x{cols} grid")]
    Bounds { row: usize, col: usize, rows: usize, cols: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

/// Failures while decoding a model file or a token set.
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported version {0}")]
    Version(u64),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing bytes after payload")]
    Trailing,
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
}
