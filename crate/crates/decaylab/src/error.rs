use thiserror::Error;

/// Errors raised by the numerical kernels, solvers and runners.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("derivative order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },
    #[error("unsupported dimension n = {n}: {reason}")]
    UnsupportedDimension { n: usize, reason: String },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("step rejected: dt = {dt:e} violates the stability limit, suggested dt = {suggested:e}")]
    StepRejected { dt: f64, suggested: f64 },
    #[error("blow-up suspected at t = {t}: {reason}")]
    BlowUpSuspected { t: f64, reason: String },
    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),
    #[error("rejected sample: {0}")]
    RejectedSample(String),
    #[error("empty corpus: every sample was rejected or count was zero")]
    EmptyCorpus,
    #[error("step budget of {0} steps exhausted before the horizon")]
    BudgetExhausted(usize),
    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn domain(msg: impl Into<String>) -> Self {
        LabError::Domain(msg.into())
    }

    pub fn config(line: Option<usize>, msg: impl Into<String>) -> Self {
        LabError::Config { line, message: msg.into() }
    }
}
