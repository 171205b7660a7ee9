use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter set or configuration file is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// A request cannot deliver the statistical precision it promises.
    #[error("precision error: {0}")]
    Precision(String),

    /// A dual iterate produced an inconsistent stationarity system.
    #[error("inconsistent solver state: {0}")]
    SolverState(String),

    /// A multiplier that must be strictly positive vanished.
    #[error("degenerate dual variables: {0}")]
    DegenerateDual(String),

    /// The linear program has no feasible point.
    #[error("linear program infeasible (phase-one residual {residual:.3e})")]
    Infeasible { residual: f64 },

    /// The linear program objective is unbounded.
    #[error("linear program unbounded along column {column}")]
    Unbounded { column: usize },

    /// An iterative method stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (last step {last_step:.3e}, best value {best:.6e})")]
    NonConvergence {
        iterations: usize,
        last_step: f64,
        best: f64,
    },

    /// The barrier method could not complete a centering step.
    #[error("barrier method failed at t = {barrier:.3e}: {reason}")]
    Barrier { barrier: f64, reason: String },

    /// Reading or writing a file failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
