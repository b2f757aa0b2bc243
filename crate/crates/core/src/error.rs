use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two parameter vectors (or a vector and a problem) disagree on layout.
    LayoutMismatch { expected: usize, found: usize },
    /// `split_rng` was asked for a consumer outside the registry.
    UnknownConsumer(String),
    /// A configuration value is out of its admissible range.
    InvalidConfig(String),
    /// A computed quantity is NaN or infinite.
    NonFinite { block: String, what: &'static str },
    /// The problem does not provide a capability the caller needs.
    Unsupported(&'static str),
    /// A constrained iterate left the feasible set.
    Infeasible { norm: f64, radius: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::LayoutMismatch { expected, found } => {
                write!(f, "layout mismatch: expected {expected} elements, found {found}")
            }
            Error::UnknownConsumer(name) => write!(f, "unknown rng consumer `{name}`"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::NonFinite { block, what } => {
                write!(f, "non-finite {what} in parameter block `{block}`")
            }
            Error::Unsupported(what) => write!(f, "unsupported: {what}"),
            Error::Infeasible { norm, radius } => {
                write!(f, "iterate norm {norm} exceeds feasible radius {radius}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
