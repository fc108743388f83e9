use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Degenerate or otherwise unusable geometry.
    #[error("geometry error: {0}")]
    Geometry(String),
    /// An invalid configuration value.
    #[error("config error: {0}")]
    Config(String),
    /// Malformed text input; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    /// Buffers of incompatible lengths.
    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    /// Short machine-readable code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Geometry(_) => "geometry",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Shape(_) => "shape",
        }
    }
}
