use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry encountered: {0}")]
    NonFinite(String),

    #[error("{method} did not converge after {iterations} iterations")]
    NonConvergence { method: &'static str, iterations: usize },

    #[error("operator-norm guard violated at iteration {iteration}: {op_norm} > {bound}")]
    GuardViolation { iteration: usize, op_norm: f64, bound: f64 },

    #[error("loss increased for {steps} consecutive steps at step size {step_size}; try a smaller step")]
    Divergence { steps: usize, step_size: f64 },

    #[error("step size underflow at t = {time}")]
    StepUnderflow { time: f64 },

    #[error("pruning removed every column (threshold {threshold})")]
    EmptyPrune { threshold: f64 },

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed sensing container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_phase(self, phase: &'static str) -> Self {
        Error::Phase {
            phase,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
