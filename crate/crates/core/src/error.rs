use thiserror::Error;

pub type Result<T, E = QsdError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsdError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// The state norm fell below the usable threshold, usually because `dt` is too large.
    #[error("degenerate state: norm {norm:e} is below 1e-14")]
    DegenerateState { norm: f64 },

    #[error("step failed at t = {t}: {source}")]
    StepFailed { t: f64, source: Box<QsdError> },

    /// The master-equation integrator produced a density matrix with a significantly negative eigenvalue.
    #[error("oracle instability at t = {t}: minimum eigenvalue {min_eigenvalue:e}")]
    OracleInstability { t: f64, min_eigenvalue: f64 },

    #[error("{} trajectories failed; first: stream {}: {}", .failures.len(), .failures[0].0, .failures[0].1)]
    EnsembleFailed { failures: Vec<(u64, QsdError)> },

    #[error("integration blow-up at t = {t}: magnitude {magnitude:e}")]
    BlowUp { t: f64, magnitude: f64 },
}

impl QsdError {
    pub(crate) fn at_time(self, t: f64) -> Self {
        QsdError::StepFailed { t, source: Box::new(self) }
    }
}

pub(crate) fn dimension_mismatch(what: &str, expected: usize, got: usize) -> QsdError {
    QsdError::InvalidArgument(format!("{what}: expected dimension {expected}, got {got}"))
}
