use std::fmt;
use std::path::PathBuf;

/// Harness errors. Each variant maps onto one of the stable exit codes.
#[derive(Debug)]
pub enum HarnessError {
    Io { path: PathBuf, source: std::io::Error },
    Parse { what: &'static str, line: usize, msg: String },
    Config(String),
    Core(ransom_core::Error),
    Csv(String),
    /// A run stopped on a non-finite value or an infeasible iterate.
    Numeric { run_id: String, source: ransom_core::Error },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }

    pub fn parse(what: &'static str, line: usize, msg: impl Into<String>) -> Self {
        HarnessError::Parse { what, line, msg: msg.into() }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Numeric { .. } => EXIT_NUMERIC,
            _ => EXIT_CONFIG,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            HarnessError::Parse { what, line, msg } => write!(f, "{what} line {line}: {msg}"),
            HarnessError::Config(msg) => write!(f, "config: {msg}"),
            HarnessError::Core(e) => write!(f, "{e}"),
            HarnessError::Csv(msg) => write!(f, "csv: {msg}"),
            HarnessError::Numeric { run_id, source } => write!(f, "run {run_id} aborted: {source}"),
        }
    }
}

impl std::error::Error for HarnessError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            HarnessError::Io { source, .. } => Some(source),
            HarnessError::Core(e) | HarnessError::Numeric { source: e, .. } => Some(e),
            _ => None,
        }
    }
}

impl From<ransom_core::Error> for HarnessError {
    fn from(e: ransom_core::Error) -> Self {
        HarnessError::Core(e)
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Csv(e.to_string())
    }
}
