use ccm_api::{ConfigRequest, ErrorKind, SequenceKind, SequenceSpec, SessionCreate, TuneRequest};
use ccm_client::{Client, ClientError};
use tokio::net::TcpListener;

async fn spawn_server() -> Client {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(ccm_service::serve(listener));
    Client::new(format!("http://{addr}/"))
}

#[tokio::test]
async fn health_and_config_errors() {
    let client = spawn_server().await;
    assert_eq!(client.health().await.unwrap().status, "ok");
    let err = client.simulate(&ConfigRequest { config: "[simulate]\nduration = -1.0\n".into() }).await.unwrap_err();
    match &err {
        ClientError::Api(b) => assert_eq!(b.kind, ErrorKind::Config),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.exit_code(), 2);
    let bad = TuneRequest { config: String::new(), sequence: SequenceSpec { kind: SequenceKind::Harmonic, a: 1.0, b: -1.0 } };
    assert_eq!(client.tune(&bad).await.unwrap_err().exit_code(), 2);
}

#[tokio::test]
async fn short_simulation_returns_artifacts() {
    let client = spawn_server().await;
    let req = ConfigRequest { config: "[simulate]\nduration = 30.0\ninterval = 10.0\n".into() };
    let out = client.simulate(&req).await.unwrap();
    let names: Vec<&str> = out.artifacts.iter().map(|a| a.name.as_str()).collect();
    assert!(names.contains(&"field.csv"), "{names:?}");
    assert!(out.resolved_config.contains("[simulate]"));
    assert_eq!(out.summary["intervals"], 3);
}

#[tokio::test]
async fn session_over_http() {
    let client = spawn_server().await;
    let info = client
        .create_session(&SessionCreate {
            config: "[tuning]\nwarmup = 20.0\n".into(),
            sequence: SequenceSpec { kind: SequenceKind::SignIncrement, a: 1.35, b: 0.0 },
            initial_alpha: None,
        })
        .await
        .unwrap();
    assert!((info.alpha - 325.0).abs() < 1e-9);
    let step = client.push_measurement(&info.id, 1050.0).await.unwrap();
    assert_eq!(step.j, Some(1));
    assert_eq!(client.session(&info.id).await.unwrap().iterations, 1);
    client.delete_session(&info.id).await.unwrap();
    let gone = client.session(&info.id).await.unwrap_err();
    assert!(matches!(gone, ClientError::Api(ref b) if b.kind == ErrorKind::NotFound));
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}")).health().await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)));
    assert_eq!(err.exit_code(), 1);
}
