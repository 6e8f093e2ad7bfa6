use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range for configuration of {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("quadrature did not converge on [{lower}, {upper}]: estimate {estimate:e}, error {error:e}")]
    Quadrature {
        lower: f64,
        upper: f64,
        estimate: f64,
        error: f64,
    },

    #[error("overflow evaluating {what} at ({x1}, {x2})")]
    Overflow { what: &'static str, x1: f64, x2: f64 },

    #[error("move rejected: {0}")]
    Resample(&'static str),

    #[error("trial budget of {trials} exhausted with {accepted} acceptances (rate {rate:e})")]
    TrialBudget {
        trials: u64,
        accepted: u64,
        rate: f64,
    },

    #[error("variance guard tripped for functional `{0}`")]
    VarianceGuard(String),

    #[error("degenerate importance weights: {0}")]
    DegenerateWeights(String),

    #[error("cannot parse model spec `{spec}`: {reason}")]
    ModelSpec { spec: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
