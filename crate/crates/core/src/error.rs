use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("matrix is not positive semidefinite (pivot {pivot:.3e} below -{threshold:.3e})")]
    NotPsd { pivot: f64, threshold: f64 },

    #[error("quantile is unbounded at probability {0}")]
    UnboundedQuantile(f64),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("robust counterpart is infeasible")]
    RobustInfeasible,

    #[error("solver did not converge after {iterations} iterations (gap {gap:.3e}, best value {best_value:.6e})")]
    NonConvergence {
        iterations: usize,
        gap: f64,
        best_value: f64,
        best: Vec<f64>,
    },

    #[error("subspace is not polyhedral; only pointwise membership checks are available")]
    NonPolyhedral,

    #[error("norm surrogate unavailable: {0}")]
    SurrogateUnavailable(String),

    #[error("bound is vacuous at this sample size: {0}")]
    VacuousBound(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: u8,
        #[source]
        source: Box<Error>,
    },

    #[error("sample {sample} at lambda {lambda:.6}: {source}")]
    Sample {
        sample: usize,
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_stage(self, stage: u8) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost cause, skipping stage and sample wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } | Error::Sample { source, .. } => source.root(),
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            actual,
        })
    }
}
