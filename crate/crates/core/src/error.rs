use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("pump ratio sigma = {sigma} is below threshold (sigma must be >= 1)")]
    BelowThreshold { sigma: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("index out of range: {0}")]
    InvalidIndex(String),

    #[error("analysis frequency must be strictly positive for the closed-form transfer matrix")]
    ZeroFrequency,

    #[error("analysis frequency {omega} sits on a pole of the {coefficient} coefficient")]
    Pole {
        omega: f64,
        coefficient: &'static str,
    },

    #[error("linear system is singular at omega = {omega}")]
    SingularSystem { omega: f64 },

    #[error("output channel {channel} is undefined at omega = {omega}")]
    UndefinedChannel { channel: String, omega: f64 },

    #[error("eigenvalue iteration did not converge")]
    EigenNoConvergence,

    #[error("zero-frequency limit did not converge (last estimates {last:?})")]
    DcNotConverged { last: Vec<f64> },

    #[error("simulation failed: {0}")]
    Simulation(String),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::BelowThreshold { .. }
                | Error::DimensionMismatch { .. }
                | Error::InvalidWitness(_)
                | Error::InvalidIndex(_)
                | Error::ZeroFrequency
        )
    }
}
