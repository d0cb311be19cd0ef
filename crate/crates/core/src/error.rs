use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("constraint violation: {0}")]
    ConstraintViolation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear solve failed: relative residual {residual:.3e} above tolerance {tol:.3e}")]
    SolverFailure { residual: f64, tol: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NewtonNonConvergence { iterations: usize, residual: f64, history: Vec<f64> },

    #[error("time step {step} failed: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("adjoint sweep failed at step {step}: {source}")]
    SweepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::StepFailure { step, source: Box::new(self) }
    }
}
