use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid method specification: {0}")]
    InvalidSpec(String),

    #[error("invalid method: {0}")]
    InvalidMethod(String),

    #[error("moment system is not square: {conditions} conditions for {unknowns} unknowns ({detail})")]
    Shape { conditions: usize, unknowns: usize, detail: String },

    #[error("singular moment system at theta = {theta}: condition estimate {condition:e}")]
    Singular { theta: f64, condition: f64 },

    #[error("order undetermined: all C_q vanish up to q = {max_q}")]
    OrderUndetermined { max_q: u32 },

    #[error("method is inconsistent: {0}")]
    Inconsistent(String),

    #[error("degenerate characteristic polynomial: {0}")]
    DegenerateDegree(String),

    #[error("root finder failed: {0}")]
    NoConvergence(String),

    #[error("point nu = {nu} (theta = {theta}) lies outside the periodicity region")]
    OutOfRegion { nu: f64, theta: f64 },

    #[error("phase-lag fit failed: log-log slope {slope:.4} is not within 0.1 of an integer")]
    FitFailure { slope: f64, points: Vec<(f64, f64)> },

    #[error("phase-lag fit needs at least 4 usable points, found {usable}")]
    InsufficientData { usable: usize },

    #[error("zero normalisation 2*sum j^2 A_j at nu = {nu}")]
    SingularNormalization { nu: f64 },

    #[error("implicit iteration diverged at step {step} after {sweeps} sweeps (residual {residual:e}); try a smaller step size")]
    ImplicitDivergence { step: usize, sweeps: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
