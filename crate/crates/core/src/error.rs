use thiserror::Error;

use crate::linalg::LinalgError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("surrogate covariance is not positive definite at index {index}, theta = {theta:?} (pivot {pivot:e})")]
    NotPositiveDefinite {
        index: usize,
        theta: Vec<f64>,
        pivot: f64,
    },
    #[error("precision matrix is singular (smallest eigenvalue {min_eigenvalue:e})")]
    SingularPrecision { min_eigenvalue: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("posterior has no mass: every grid node has zero prior or -inf log-likelihood")]
    EmptyPosterior,
    #[error("path exceeded the step cap of {cap} steps")]
    StepCapExceeded { cap: usize },
    #[error("{dropped} of {total} outer draws had a vanishing inner likelihood average; increase n_inner")]
    TooManyDroppedDraws { dropped: usize, total: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Self::Dimension(msg.into())
    }

    /// True for errors that stem from numerics rather than input or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::NotPositiveDefinite { .. }
                | Self::SingularPrecision { .. }
                | Self::NonFinite(_)
                | Self::EmptyPosterior
                | Self::StepCapExceeded { .. }
                | Self::TooManyDroppedDraws { .. }
                | Self::Linalg(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Self::Io(_) | Self::Csv(_))
    }
}
