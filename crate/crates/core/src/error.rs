use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("hypothesis violation ({clause}): {detail}")]
    HypothesisViolation { clause: String, detail: String },

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("monotonicity lost at v = {v}")]
    MonotonicityLost { v: f64 },

    #[error("bracketing failure: {0}")]
    BracketingFailure(String),

    #[error("no convergence after {doublings} doublings; terminal slope trend {trend:?}")]
    NoConvergence { doublings: usize, trend: Vec<f64> },

    #[error("degenerate constant orbit: {0}")]
    DegenerateConstant(String),

    #[error("degenerate case: {0}")]
    DegenerateCase(String),

    #[error("undetermined: {0}")]
    Undetermined(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn hypothesis(clause: &str, detail: impl Into<String>) -> Self {
        Error::HypothesisViolation {
            clause: clause.to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
