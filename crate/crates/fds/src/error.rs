use thiserror::Error;

#[derive(Debug, Error)]
pub enum FdsError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("gate decomposition residual {residual:e} exceeds tolerance {tol:e}")]
    GateDecomposition { residual: f64, tol: f64 },
    #[error("bond matrix eigenvalue {value:e} is not positive")]
    NonPositiveEigenvalue { value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("non-positive contraction value {value:e} in {context}")]
    NonPositiveContraction { context: &'static str, value: f64 },
    #[error("need at least {needed} data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("fit did not converge: {0}")]
    FitDiverged(String),
    #[error("no critical temperature supplied for N={0}")]
    MissingCriticalTemp(u32),
    #[error("no records fall inside the requested window")]
    EmptyWindow,
    #[error("scan did not bracket an interior optimum")]
    NotBracketed,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("enumeration budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("residual {residual:e} exceeds tolerance {tol:e} in {context}")]
    ToleranceExceeded {
        context: &'static str,
        residual: f64,
        tol: f64,
    },
    #[error("eigensolver failed: {0}")]
    Linalg(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("config error: {0}")]
    Config(String),
}
