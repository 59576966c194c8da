//! Async client for the ccm service.

use ccm_api::{
    ConfigRequest, ErrorBody, Health, IdentifyRequest, MeasurementPush, RunResponse, SessionCreate, SessionInfo,
    SessionStep, SweepRequest, TuneRequest, API_PREFIX,
};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{}", .0.message)]
    Api(ErrorBody),
    #[error("cannot reach the service: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("unexpected response ({status}): {body}")]
    Protocol { status: u16, body: String },
}

impl ClientError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ClientError::Api(b) => b.kind.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if status.is_success() {
            return serde_json::from_slice(&bytes)
                .map_err(|_| ClientError::Protocol { status: status.as_u16(), body: String::from_utf8_lossy(&bytes).into() });
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(b) => Err(ClientError::Api(b)),
            Err(_) => Err(ClientError::Protocol { status: status.as_u16(), body: String::from_utf8_lossy(&bytes).into() }),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self.http.post(format!("{}{API_PREFIX}{path}", self.base)).json(body).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health> {
        Self::decode(self.http.get(format!("{}/health", self.base)).send().await?).await
    }

    pub async fn simulate(&self, req: &ConfigRequest) -> Result<RunResponse> {
        self.post("/simulate", req).await
    }

    pub async fn synthesize(&self, req: &ConfigRequest) -> Result<RunResponse> {
        self.post("/synthesize", req).await
    }

    pub async fn identify(&self, req: &IdentifyRequest) -> Result<RunResponse> {
        self.post("/identify", req).await
    }

    pub async fn tune(&self, req: &TuneRequest) -> Result<RunResponse> {
        self.post("/tune", req).await
    }

    pub async fn sweep(&self, req: &SweepRequest) -> Result<RunResponse> {
        self.post("/sweep", req).await
    }

    pub async fn scatter(&self, req: &ConfigRequest) -> Result<RunResponse> {
        self.post("/scatter", req).await
    }

    pub async fn create_session(&self, req: &SessionCreate) -> Result<SessionInfo> {
        self.post("/sessions", req).await
    }

    pub async fn session(&self, id: &str) -> Result<SessionInfo> {
        Self::decode(self.http.get(format!("{}{API_PREFIX}/sessions/{id}", self.base)).send().await?).await
    }

    pub async fn push_measurement(&self, id: &str, measured: f64) -> Result<SessionStep> {
        self.post(&format!("/sessions/{id}/measurements"), &MeasurementPush { measured }).await
    }

    pub async fn delete_session(&self, id: &str) -> Result<()> {
        let resp = self.http.delete(format!("{}{API_PREFIX}/sessions/{id}", self.base)).send().await?;
        if resp.status().is_success() {
            return Ok(());
        }
        Self::decode::<serde_json::Value>(resp).await.map(|_| ())
    }
}
