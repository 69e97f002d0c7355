use std::path::PathBuf;

use crate::sequence::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is missing, out of range, or inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// A file could not be parsed against its schema.
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    /// An argument lies outside the domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("plan is infeasible ({} violation(s))", .0.len())]
    Infeasible(Vec<Violation>),

    #[error("mode sets differ: {0}")]
    ModeMismatch(String),

    #[error("empty timeline")]
    EmptyTimeline,

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for this error: 1 for domain violations,
    /// 2 for usage and parse problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::ModeMismatch(_) | Error::Domain(_) => 1,
            Error::EmptyTimeline => 1,
            Error::Config(_) | Error::Parse { .. } | Error::Io { .. } | Error::Csv(_) => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
