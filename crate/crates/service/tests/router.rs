use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use ccm_api::{ErrorBody, ErrorKind, Health, SessionInfo, SessionStep};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

#[tokio::test]
async fn health_reports_ok() {
    let app = ccm_service::router();
    let (status, body) = call(&app, Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_slice(&body).unwrap();
    assert_eq!(h.status, "ok");
}

#[tokio::test]
async fn unknown_config_key_is_a_config_error() {
    let app = ccm_service::router();
    let (status, body) = call(&app, Method::POST, "/v1/simulate", Some(json!({ "config": "bogus = 1\n" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let e: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(e.kind, ErrorKind::Config);
}

#[tokio::test]
async fn negative_offset_is_rejected_before_any_run() {
    let app = ccm_service::router();
    let req = json!({ "sequence": { "kind": "harmonic", "a": 1.0, "b": -2.0 } });
    let (status, body) = call(&app, Method::POST, "/v1/tune", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let e: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert!(e.message.contains("b = -2"), "{}", e.message);
}

fn flat_profile(nodes: usize) -> String {
    std::iter::once("coord,inner\n".to_string()).chain((0..nodes).map(|i| format!("{},300\n", i as f64 * 0.01))).collect()
}

#[tokio::test]
async fn wrong_node_count_is_a_config_error() {
    let app = ccm_service::router();
    let req = json!({ "config": "", "measurements": flat_profile(5) });
    let (status, body) = call(&app, Method::POST, "/v1/identify", Some(req)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8_lossy(&body).contains("121 surface nodes"));
}

#[tokio::test]
async fn ambient_measurements_are_degenerate() {
    let app = ccm_service::router();
    let req = json!({ "config": "[identify]\nsettle = 60.0\n", "measurements": flat_profile(121) });
    let (status, body) = call(&app, Method::POST, "/v1/identify", Some(req)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{}", String::from_utf8_lossy(&body));
    let e: ErrorBody = serde_json::from_slice(&body).unwrap();
    assert_eq!(e.kind, ErrorKind::Degenerate);
}

#[tokio::test]
async fn session_lifecycle() {
    let app = ccm_service::router();
    let create = json!({
        "config": "[tuning]\nwarmup = 40.0\n",
        "sequence": { "kind": "harmonic", "a": 1.0 },
        "initial_alpha": 300.0,
    });
    let (status, body) = call(&app, Method::POST, "/v1/sessions", Some(create)).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
    let info: SessionInfo = serde_json::from_slice(&body).unwrap();
    assert_eq!(info.alpha, 300.0);
    assert_eq!(info.iterations, 0);
    let uri = format!("/v1/sessions/{}", info.id);

    let (status, body) =
        call(&app, Method::POST, &format!("{uri}/measurements"), Some(json!({ "measured": 1100.0 }))).await;
    assert_eq!(status, StatusCode::OK);
    let step: SessionStep = serde_json::from_slice(&body).unwrap();
    assert_eq!(step.j, Some(1));
    assert!(step.alpha != 300.0);

    let (_, body) = call(&app, Method::GET, &uri, None).await;
    let info: SessionInfo = serde_json::from_slice(&body).unwrap();
    assert_eq!(info.iterations, 1);
    assert!(info.tau > 40.0);

    assert_eq!(call(&app, Method::DELETE, &uri, None).await.0, StatusCode::NO_CONTENT);
    assert_eq!(call(&app, Method::GET, &uri, None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, Method::DELETE, &uri, None).await.0, StatusCode::NOT_FOUND);
}
