//! Error type shared across the crate.

use std::fmt;

/// Errors produced by tensor operations, layer evaluation, and factorization.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An argument was out of range or structurally invalid.
    InvalidArgument(String),
    /// Dimensions of two operands do not line up.
    ShapeMismatch(String),
    /// The operation is defined but not supported for this configuration.
    UnsupportedConfig(String),
    /// An input contained NaN or infinite values.
    NonFinite(String),
    /// A replacement directive was refused (for example, targeting layer 1).
    RejectedDirective(String),
    /// A serialized weight container failed validation.
    Corrupt(String),
    /// An error raised while evaluating a specific layer of a network.
    Layer { index: usize, source: Box<Error> },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    /// Wraps an error with the 1-based index of the layer that raised it.
    pub fn at_layer(self, index: usize) -> Self {
        Error::Layer {
            index,
            source: Box::new(self),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::UnsupportedConfig(msg) => write!(f, "unsupported configuration: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite values: {msg}"),
            Error::RejectedDirective(msg) => write!(f, "rejected directive: {msg}"),
            Error::Corrupt(msg) => write!(f, "corrupt weight container: {msg}"),
            Error::Layer { index, source } => write!(f, "layer {index}: {source}"),
        }
    }
}

impl std::error::Error for Error {}

pub type Result<T> = std::result::Result<T, Error>;
