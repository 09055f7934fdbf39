use std::net::SocketAddr;
use std::time::Duration;

use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::Router;
use penflow::backend::HttpBackend;
use penflow_core::summarize::{BackendError, GenerationBackend};

/// Echo server on a background runtime: `/echo` answers with the auth header
/// and body, `/fail` with 503, `/slow` after two seconds.
fn spawn_server() -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route(
                    "/echo",
                    post(|headers: HeaderMap, body: String| async move {
                        let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
                        format!("{}|{body}", auth.unwrap_or_default())
                    }),
                )
                .route("/fail", post(|| async { StatusCode::SERVICE_UNAVAILABLE }))
                .route(
                    "/slow",
                    post(|| async {
                        tokio::time::sleep(Duration::from_secs(2)).await;
                        "late"
                    }),
                );
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

#[test]
fn posts_prompt_with_bearer_key() {
    let addr = spawn_server();
    let b = HttpBackend::new(format!("http://{addr}/echo"), Some("k3y".into()), Some("local-model".into()));
    assert_eq!(b.model_id(), "local-model");
    assert_eq!(b.generate("name this", Duration::from_secs(5)).unwrap(), "Bearer k3y|name this");

    let anonymous = HttpBackend::new(format!("http://{addr}/echo"), None, None);
    assert_eq!(anonymous.model_id(), format!("http://{addr}/echo"));
    assert_eq!(anonymous.generate("x", Duration::from_secs(5)).unwrap(), "|x");
}

#[test]
fn errors_and_timeouts_are_classified() {
    let addr = spawn_server();
    let failing = HttpBackend::new(format!("http://{addr}/fail"), None, None);
    assert!(matches!(failing.generate("x", Duration::from_secs(5)), Err(BackendError::Request(m)) if m.contains("503")));

    let slow = HttpBackend::new(format!("http://{addr}/slow"), None, None);
    assert!(matches!(slow.generate("x", Duration::from_millis(200)), Err(BackendError::Timeout(_))));
}
