use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// Z-Y-X Euler-rate kinematics are singular at |pitch| = π/2.
    #[error("gimbal lock: pitch {pitch:.6} rad is within the singular band")]
    GimbalLock { pitch: f64 },

    #[error("non-finite value produced in {context}")]
    NonFinite { context: &'static str },

    #[error("singular configuration: mass matrix condition number {condition:.3e}")]
    SingularConfiguration { condition: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("invalid fault schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter {field}: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("simulation crashed at t = {t:.2} s: {reason}")]
    Crash { t: f64, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
