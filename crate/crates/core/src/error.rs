use thiserror::Error;

/// Per-iteration record of the law fixed point, kept in `f64` for reporting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardRecord {
    pub iteration: usize,
    pub y_gap: f64,
    pub z_gap: f64,
    pub sup_delta: f64,
    /// Tail-energy proxy of the iterate's Z field.
    pub bmo: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical divergence at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("singular regression system at step {step} (condition estimate {condition:.3e})")]
    SingularRegression { step: usize, condition: f64 },

    #[error("picard iteration diverged at iteration {iteration}: {detail}")]
    PicardDivergence {
        iteration: usize,
        detail: String,
        trace: Vec<PicardRecord>,
    },

    #[error("hypothesis probe failed: {0}")]
    ProbeFailed(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for the numerical-divergence family (exit code 3 in the CLI).
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::Divergence { .. } | Error::PicardDivergence { .. } | Error::SingularRegression { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
