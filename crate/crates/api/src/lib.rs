//! Request and response bodies of the HTTP/JSON interface.
//!
//! Configurations travel as TOML text so that clients need no knowledge of
//! the model types; the service parses, validates and echoes back the
//! resolved form.

use serde::{Deserialize, Serialize};

pub const API_PREFIX: &str = "/v1";

/// Experiment configuration as TOML text; empty selects every default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigRequest {
    #[serde(default)]
    pub config: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyRequest {
    #[serde(default)]
    pub config: String,
    /// CSV with columns `coord,inner` and optionally `outer`.
    pub measurements: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    /// `harmonic`, `sign-reset` or `sign-increment`.
    pub kind: SequenceKind,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceKind {
    Harmonic,
    SignReset,
    SignIncrement,
}

impl SequenceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SequenceKind::Harmonic => "harmonic",
            SequenceKind::SignReset => "sign-reset",
            SequenceKind::SignIncrement => "sign-increment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRequest {
    #[serde(default)]
    pub config: String,
    pub sequence: SequenceSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    #[serde(default)]
    pub config: String,
    /// Sweep grid as TOML; the grid inside the config when absent.
    #[serde(default)]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactFile {
    pub name: String,
    pub content: String,
}

/// Outcome of one batch run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResponse {
    /// Configuration with every default filled in, as TOML.
    pub resolved_config: String,
    pub artifacts: Vec<ArtifactFile>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Numeric,
    Degenerate,
    NotFound,
    Internal,
}

impl ErrorKind {
    /// Process exit code for the CLI.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Degenerate => 4,
            ErrorKind::NotFound | ErrorKind::Internal => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreate {
    #[serde(default)]
    pub config: String,
    pub sequence: SequenceSpec,
    /// Starting `alpha_c`; the configured truth times the initial factor when absent.
    #[serde(default)]
    pub initial_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub sequence: SequenceSpec,
    pub tau: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub accepted: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPush {
    /// Measured temperature at the tuning point [K].
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionStep {
    /// Iteration number, absent when the measurement was rejected.
    pub j: Option<usize>,
    pub model: f64,
    pub residual: Option<f64>,
    pub alpha: f64,
    pub accepted: Option<f64>,
}
