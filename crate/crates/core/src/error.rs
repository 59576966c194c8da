use thiserror::Error;

/// Failure categories shared by every layer of the crate.
///
/// The category decides the process exit code of the CLI and the HTTP status
/// of the service, so new variants must be mapped in [`CoreError::kind`].
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{property} is not tabulated at T = {temperature} K (table covers {min}..{max} K)")]
    Domain {
        property: &'static str,
        temperature: f64,
        min: f64,
        max: f64,
    },

    #[error("time step {requested} s exceeds the admissible explicit step {admissible} s")]
    Unstable { requested: f64, admissible: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("interior solve did not converge after {iterations} iterations (residual {residual:e} K)")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used at process and network boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Numeric,
    Degenerate,
    Io,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Degenerate => 4,
            ErrorKind::Io => 1,
        }
    }
}

impl CoreError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            CoreError::Config(_) | CoreError::Precondition(_) => ErrorKind::Config,
            CoreError::Domain { .. }
            | CoreError::Unstable { .. }
            | CoreError::Numeric(_)
            | CoreError::NotConverged { .. } => ErrorKind::Numeric,
            CoreError::Degenerate(_) => ErrorKind::Degenerate,
            CoreError::Io(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
