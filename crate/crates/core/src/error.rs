use std::path::PathBuf;

use crate::estimator::EstimatorError;
use crate::optimizer::OptimizerError;
use crate::profiles::ProfileError;
use crate::zoo::ZooError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Zoo(#[from] ZooError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }

    /// Short category name for machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Zoo(_) => "zoo",
            Error::Profile(_) => "profile",
            Error::Estimator(_) => "estimator",
            Error::Optimizer(_) => "optimizer",
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
            Error::Invalid(_) => "invalid",
            Error::Context { source, .. } => source.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
