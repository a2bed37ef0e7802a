use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("weak-fluctuation approximation violated: log-amplitude variance {0:.4} >= 0.3")]
    StrongScintillation(f64),

    #[error("non-physical covariance matrix: symplectic eigenvalue {name} = {value} is below 1")]
    NonPhysical { name: &'static str, value: f64 },

    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("{0}")]
    Plot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for problems with user input rather than with the computation.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. } | Error::Plot(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
