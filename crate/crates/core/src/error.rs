use nalgebra::DVector;
use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point outside the chart domain: {0}")]
    Domain(String),

    #[error("degenerate triangle {index} (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Newton solve did not converge after {} iterations (residual {:e})", .0.report.iterations, .0.report.final_residual)]
    NonConvergence(Box<NonConvergence>),

    #[error("singular linear system at Newton iteration {iteration}")]
    SingularSystem { iteration: usize },

    #[error("degenerate plane: Gram determinant {gram:e} below threshold {threshold:e}")]
    DegeneratePlane { gram: f64, threshold: f64 },

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    /// Failure inside a composite operation, tagged with where it happened.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Payload of a failed Newton solve: the best iterate seen and the report.
#[derive(Debug, Clone)]
pub struct NonConvergence {
    pub best: DVector<f64>,
    pub report: SolveReport,
}

impl Error {
    pub fn at(self, stage: impl Into<String>) -> Error {
        Error::Stage { stage: stage.into(), source: Box::new(self) }
    }

    /// Innermost error after stripping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait ResultExt<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, stage: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|e| e.at(stage()))
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
