//! Axum router exposing simulation, synthesis, identification and tuning.
//!
//! Batch endpoints are stateless: each request carries its configuration
//! and the response carries every artifact. Live tuning sessions keep a
//! warmed-up model in memory between measurements.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ccm_api::{
    ArtifactFile, ConfigRequest, ErrorBody, ErrorKind, Health, IdentifyRequest, MeasurementPush, RunResponse, SequenceSpec,
    SessionCreate, SessionInfo, SessionStep, SweepRequest, TuneRequest,
};
use ccm_core::chtc::ProfileRecord;
use ccm_core::harness::{self, Artifact, ExperimentConfig, SweepGrid, TuningSession};
use ccm_core::ident_sa::StepSequence;
use ccm_core::CoreError;
use serde_json::json;
use tokio::net::TcpListener;

/// Error returned by every handler.
#[derive(Debug)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
}

impl ApiError {
    fn not_found(what: impl Into<String>) -> Self {
        Self { kind: ErrorKind::NotFound, message: what.into() }
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let kind = match e.kind() {
            ccm_core::ErrorKind::Config => ErrorKind::Config,
            ccm_core::ErrorKind::Numeric => ErrorKind::Numeric,
            ccm_core::ErrorKind::Degenerate => ErrorKind::Degenerate,
            ccm_core::ErrorKind::Io => ErrorKind::Internal,
        };
        Self { kind, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.kind {
            ErrorKind::Config => StatusCode::BAD_REQUEST,
            ErrorKind::Degenerate => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Numeric | ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody { kind: self.kind, message: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Default)]
struct Sessions {
    map: Mutex<HashMap<String, Arc<Mutex<TuningSession>>>>,
}

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Sessions>,
}

pub fn router() -> Router {
    let p = ccm_api::API_PREFIX;
    Router::new()
        .route("/health", get(health))
        .route(&format!("{p}/simulate"), post(simulate))
        .route(&format!("{p}/synthesize"), post(synthesize))
        .route(&format!("{p}/identify"), post(identify))
        .route(&format!("{p}/tune"), post(tune))
        .route(&format!("{p}/sweep"), post(sweep))
        .route(&format!("{p}/scatter"), post(scatter))
        .route(&format!("{p}/sessions"), post(create_session))
        .route(&format!("{p}/sessions/{{id}}"), get(session_info).delete(delete_session))
        .route(&format!("{p}/sessions/{{id}}/measurements"), post(push_measurement))
        .with_state(AppState::default())
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}

fn parse_config(text: &str) -> Result<ExperimentConfig, ApiError> {
    if text.trim().is_empty() {
        return Ok(ExperimentConfig::default());
    }
    Ok(ExperimentConfig::from_toml(text)?)
}

fn sequence(spec: &SequenceSpec) -> Result<StepSequence, ApiError> {
    let s = StepSequence::from_name(spec.kind.as_str(), spec.a, spec.b)?;
    s.validate()?;
    Ok(s)
}

/// Runs model code off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError { kind: ErrorKind::Internal, message: format!("worker failed: {e}") })?
}

fn files(artifacts: Vec<Artifact>) -> Vec<ArtifactFile> {
    artifacts.into_iter().map(|a| ArtifactFile { name: a.name, content: a.content }).collect()
}

fn to_json<T: serde::Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn simulate(Json(req): Json<ConfigRequest>) -> ApiResult<RunResponse> {
    let cfg = parse_config(&req.config)?;
    let out = blocking(move || {
        let sim = harness::run_simulation(&cfg)?;
        let summary = json!({
            "tau": sim.state.tau,
            "intervals": sim.audit.intervals,
            "worst_relative_defect": sim.audit.worst_defect,
            "band_warnings": sim.state.band_warnings,
        });
        Ok(RunResponse { resolved_config: cfg.resolved_toml(), artifacts: files(sim.artifacts()?), summary })
    })
    .await?;
    Ok(Json(out))
}

async fn synthesize(Json(req): Json<ConfigRequest>) -> ApiResult<RunResponse> {
    let cfg = parse_config(&req.config)?;
    let out = blocking(move || {
        let data = harness::synthesize(&cfg)?;
        let summary = json!({
            "surface_nodes": data.coords.len(),
            "stream_samples": data.stream.len(),
            "profile_sigma": cfg.identify.noise.sigma,
            "stream_sigma": cfg.tuning.noise.sigma,
            "worst_relative_defect": data.audit.worst_defect,
        });
        let artifacts = vec![
            ArtifactFile { name: "measurements.csv".into(), content: data.profile_csv() },
            ArtifactFile { name: "stream.csv".into(), content: data.stream_csv() },
        ];
        Ok(RunResponse { resolved_config: cfg.resolved_toml(), artifacts, summary })
    })
    .await?;
    Ok(Json(out))
}

async fn identify(Json(req): Json<IdentifyRequest>) -> ApiResult<RunResponse> {
    let cfg = parse_config(&req.config)?;
    let measured = harness::read_measurements_csv(&req.measurements)?;
    let out = blocking(move || {
        let (id, _) = harness::identify_measurements(&cfg, &measured)?;
        let mut report = Vec::new();
        id.write_report_csv(&mut report)?;
        let record =
            ProfileRecord { section: id.section, face: id.face, alpha_c: id.profile.alpha_c, alpha_p: id.profile.alpha_p, w: id.profile.w };
        let artifacts = vec![
            ArtifactFile { name: "identification.csv".into(), content: String::from_utf8_lossy(&report).into_owned() },
            ArtifactFile { name: "profile.toml".into(), content: record.to_toml() },
        ];
        Ok(RunResponse { resolved_config: cfg.resolved_toml(), artifacts, summary: to_json(&id.summary()) })
    })
    .await?;
    Ok(Json(out))
}

async fn tune(Json(req): Json<TuneRequest>) -> ApiResult<RunResponse> {
    let cfg = parse_config(&req.config)?;
    let seq = sequence(&req.sequence)?;
    let out = blocking(move || {
        let rec = harness::run_tuning_experiment(&cfg, &seq)?;
        let artifacts = vec![
            ArtifactFile { name: "trajectory.csv".into(), content: rec.csv() },
            ArtifactFile { name: "status.toml".into(), content: rec.trajectory.status_block() },
        ];
        let summary = json!({
            "status": rec.trajectory.status.as_str(),
            "final_alpha": rec.trajectory.final_alpha,
            "iterations": rec.trajectory.iterations,
            "metrics": to_json(&rec.metrics),
        });
        Ok(RunResponse { resolved_config: cfg.resolved_toml(), artifacts, summary })
    })
    .await?;
    Ok(Json(out))
}

async fn sweep(Json(req): Json<SweepRequest>) -> ApiResult<RunResponse> {
    let mut cfg = parse_config(&req.config)?;
    if let Some(g) = &req.grid {
        cfg.sweep = SweepGrid::from_toml(g)?;
    }
    let out = blocking(move || {
        let recs = harness::run_fig4_7_sweeps(&cfg, &cfg.sweep)?;
        let summary = recs
            .iter()
            .map(|r| json!({ "cell": r.cell.name(), "status": r.trajectory.status.as_str(), "metrics": to_json(&r.metrics) }))
            .collect();
        Ok(RunResponse {
            resolved_config: cfg.resolved_toml(),
            artifacts: files(harness::sweep_artifacts(&recs)),
            summary: serde_json::Value::Array(summary),
        })
    })
    .await?;
    Ok(Json(out))
}

async fn scatter(Json(req): Json<ConfigRequest>) -> ApiResult<RunResponse> {
    let cfg = parse_config(&req.config)?;
    let out = blocking(move || {
        let rep = harness::run_fig3_experiment(&cfg, cfg.identify.seeds)?;
        let summary = json!({
            "rel_error_alpha_c": rep.rel_error_alpha_c,
            "rel_error_alpha_p": rep.rel_error_alpha_p,
            "scatter": to_json(&rep.scatter),
        });
        Ok(RunResponse { resolved_config: cfg.resolved_toml(), artifacts: files(rep.artifacts()), summary })
    })
    .await?;
    Ok(Json(out))
}

fn session_info_of(id: &str, s: &TuningSession, spec: SequenceSpec) -> SessionInfo {
    SessionInfo {
        id: id.to_string(),
        sequence: spec,
        tau: s.tau(),
        alpha: s.alpha(),
        iterations: s.points().len(),
        accepted: s.accepted(),
    }
}

fn spec_of(seq: &StepSequence) -> SequenceSpec {
    use ccm_api::SequenceKind as K;
    match *seq {
        StepSequence::Harmonic { a, b } => SequenceSpec { kind: K::Harmonic, a, b },
        StepSequence::SignReset { a } => SequenceSpec { kind: K::SignReset, a, b: 0.0 },
        StepSequence::SignIncrement { a } => SequenceSpec { kind: K::SignIncrement, a, b: 0.0 },
    }
}

fn lookup(state: &AppState, id: &str) -> Result<Arc<Mutex<TuningSession>>, ApiError> {
    let map = state.sessions.map.lock().expect("session map lock");
    map.get(id).cloned().ok_or_else(|| ApiError::not_found(format!("no tuning session {id}")))
}

async fn create_session(State(state): State<AppState>, Json(req): Json<SessionCreate>) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let cfg = parse_config(&req.config)?;
    let seq = sequence(&req.sequence)?;
    let initial = req.initial_alpha.unwrap_or(cfg.truth.alpha_c * cfg.tuning.initial_factor);
    let session = blocking(move || Ok(TuningSession::start(&cfg, seq, initial)?)).await?;
    let id = uuid::Uuid::new_v4().to_string();
    let info = session_info_of(&id, &session, req.sequence);
    state.sessions.map.lock().expect("session map lock").insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(%id, "tuning session started");
    Ok((StatusCode::CREATED, Json(info)))
}

async fn session_info(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<SessionInfo> {
    let s = lookup(&state, &id)?;
    let s = s.lock().expect("session lock");
    let spec = spec_of(s.sequence());
    Ok(Json(session_info_of(&id, &s, spec)))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    match state.sessions.map.lock().expect("session map lock").remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::not_found(format!("no tuning session {id}"))),
    }
}

async fn push_measurement(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<MeasurementPush>,
) -> ApiResult<SessionStep> {
    let s = lookup(&state, &id)?;
    let step = blocking(move || {
        let mut s = s.lock().expect("session lock");
        let u = s.push(req.measured)?;
        Ok(SessionStep {
            j: u.point.map(|p| p.j),
            model: u.model,
            residual: u.point.map(|p| p.residual),
            alpha: u.alpha,
            accepted: u.accepted,
        })
    })
    .await?;
    Ok(Json(step))
}
