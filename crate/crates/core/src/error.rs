//! Crate-wide error type.

/// Errors produced by the engine and its components.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violated a precondition (empty query text,
    /// zero retrieval depth, a duplicate edit id, and so on).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The embedding backend failed to produce a vector.
    #[error("embedding failed: {0}")]
    Embedding(String),

    /// Two vectors that must share a dimension did not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A file or request body did not match the expected shape. `line` is
    /// set when the source is line-delimited.
    #[error("schema error{}: {message}", fmt_line(.line))]
    Schema { line: Option<usize>, message: String },

    /// A completion backend was unreachable or returned a malformed reply.
    #[error("backend '{backend}' failed: {message}")]
    Backend { backend: String, message: String },

    /// Training could not produce a usable model (no samples survived
    /// subsampling, or every sample carried the same label).
    #[error("filter not trainable: {0}")]
    NotTrained(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for a schema error with no line number.
    pub fn schema(message: impl Into<String>) -> Self {
        Error::Schema { line: None, message: message.into() }
    }

    /// Shorthand for a schema error tied to a 1-based line number.
    pub fn schema_at(line: usize, message: impl Into<String>) -> Self {
        Error::Schema { line: Some(line), message: message.into() }
    }

    /// Shorthand for a backend failure.
    pub fn backend(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Backend { backend: backend.into(), message: message.into() }
    }
}

fn fmt_line(line: &Option<usize>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}
