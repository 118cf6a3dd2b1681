//! Error types shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Gradient computation requires a 1×1 output node.
    #[error("output node is {rows}x{cols}, expected 1x1")]
    NonScalarOutput { rows: usize, cols: usize },

    /// A forward value became NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFiniteValue(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Spectral normalization of an all-zero matrix.
    #[error("matrix has zero Frobenius norm")]
    ZeroMatrix,

    /// Ratio-valued inputs must be strictly positive.
    #[error("ratio values must be strictly positive ({0})")]
    NonPositiveRatio(String),

    /// KLIEP projection divides by the empirical mean of r(Z).
    #[error("degenerate constraint: mean r(Z) is zero")]
    DegenerateConstraint,

    /// Least-squares system could not be factorized.
    #[error("singular system in least-squares solve")]
    SingularSystem,

    #[error("unknown shape `{0}` (expected mog, banana, rings, square, cosine or funnel)")]
    UnknownShape(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown key `{key}` at line {line}")]
    UnknownKey { key: String, line: usize },

    /// A config value failed validation; names the offending key.
    #[error("value out of range for `{key}`: {msg}")]
    Range { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
