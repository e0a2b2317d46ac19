use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("CFL violation: ds = {ds} exceeds ds_max = {ds_max} (dx = {dx})")]
    Cfl { ds: f64, ds_max: f64, dx: f64 },

    #[error("numerics: {0}")]
    Numerics(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("policy format: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

/// Coarse error classes, used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerics,
    Convergence,
    Other,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Model(_) | Error::Grid(_) | Error::Format(_) => ErrorClass::Config,
            Error::Cfl { .. }
            | Error::Numerics(_)
            | Error::Precondition(_)
            | Error::Singular(_)
            | Error::Empty(_) => ErrorClass::Numerics,
            Error::NonConvergence { .. } => ErrorClass::Convergence,
            Error::Io(_) => ErrorClass::Other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
