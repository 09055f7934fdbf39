use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use penflow::api::{app_state, router, ServeConfig, ServeError};
use penflow_core::consensus::consensus_partition;
use penflow_core::ingest::{assemble_collections, parse_event_log, CollectionKey, LogFormat};
use penflow_core::session::load_session;
use serde_json::{json, Value};
use tower::ServiceExt;

const FIXTURE: &str = include_str!("fixtures/fixture.csv");

fn config() -> ServeConfig {
    ServeConfig {
        host: "127.0.0.1".parse().unwrap(),
        port: 0,
        data_dir: None,
        backend: None,
        timeout: Duration::from_secs(1),
        alpha: 1.0,
        cors_origin: None,
        preload: Vec::new(),
    }
}

fn app_with(config: &ServeConfig) -> Router {
    router(app_state(config).unwrap(), config.cors_origin.as_deref()).unwrap()
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(serde_json::to_vec(&v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn upload(app: &Router, name: &str, content: &str) -> (StatusCode, Value) {
    let boundary = "XyZpenflowBoundary";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{name}\"\r\n\
         Content-Type: application/octet-stream\r\n\r\n{content}\r\n--{boundary}--\r\n"
    );
    let req = Request::builder()
        .method(Method::POST)
        .uri("/datasets")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn fixture_app() -> (Router, String) {
    let app = app_with(&config());
    let (status, info) = upload(&app, "fixture.csv", FIXTURE).await;
    assert_eq!(status, StatusCode::CREATED, "{info}");
    (app, info["id"].as_str().unwrap().to_string())
}

async fn new_session(app: &Router, dataset: &str, role: &str, stage: &str) -> Value {
    let (status, s) =
        call(app, Method::POST, "/sessions", Some(json!({"dataset": dataset, "role": role, "stage": stage}))).await;
    assert_eq!(status, StatusCode::CREATED, "{s}");
    s
}

#[tokio::test]
async fn health_is_ok() {
    let app = app_with(&config());
    assert_eq!(call(&app, Method::GET, "/health", None).await, (StatusCode::OK, json!({"status": "ok"})));
}

#[tokio::test]
async fn upload_reports_collections() {
    let (app, id) = fixture_app().await;
    let (_, list) = call(&app, Method::GET, "/datasets", None).await;
    assert_eq!(list, json!([id]));
    let (status, again) = upload(&app, "fixture.csv", FIXTURE).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(again["id"], json!(id));
    assert_eq!(again["collections"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn invalid_upload_is_rejected_with_code() {
    let app = app_with(&config());
    let bad = "team_id,author_role,turn,event_category,activity_label,start_s,end_s\n1,NS,0,Dancing,x,0,1\n";
    let (status, body) = upload(&app, "bad.csv", bad).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "UnknownCategory");
    let (status, body) = call(&app, Method::POST, "/datasets", Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "BadRequest");
}

#[tokio::test]
async fn consensus_matches_engine() {
    let (app, id) = fixture_app().await;
    let records = parse_event_log(FIXTURE.as_bytes(), LogFormat::Csv).unwrap();
    let collections = assemble_collections(&records).unwrap();
    let c = collections.get("NNS-collaborative".parse::<CollectionKey>().unwrap());
    let expected = serde_json::to_value(consensus_partition(c, 4).unwrap()).unwrap();

    let (status, body) = call(&app, Method::GET, "/collections/NNS/collaborative/consensus?k=4", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, expected);
    let uri = format!("/datasets/{id}/collections/NNS/collaborative/consensus?k=4");
    assert_eq!(call(&app, Method::GET, &uri, None).await.1, expected);

    let uri = format!("/datasets/{id}/collections/NNS/collaborative/consensus?k=99");
    let (status, body) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "KOutOfRange");
    let uri = format!("/datasets/{id}/collections/XX/collaborative/consensus");
    assert_eq!(call(&app, Method::GET, &uri, None).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let (app, _) = fixture_app().await;
    for uri in ["/datasets/nope/stats", "/sessions/s99", "/datasets/nope/comparison?left=NS-individual&right=NNS-individual"] {
        let (status, body) = call(&app, Method::GET, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
        assert!(body["code"].as_str().unwrap().starts_with("Unknown"));
    }
}

#[tokio::test]
async fn stats_has_twelve_cells() {
    let (app, id) = fixture_app().await;
    let (status, body) = call(&app, Method::GET, &format!("/datasets/{id}/stats"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["activity"]["cells"].as_array().unwrap().len(), 12);
    assert_eq!(body["collections"][0]["stats"]["sequences"], 10);
}

#[tokio::test]
async fn edits_update_and_unknown_author_is_404() {
    let (app, id) = fixture_app().await;
    let s = new_session(&app, &id, "NNS", "collaborative").await;
    let sid = s["id"].as_str().unwrap();
    assert_eq!(s["edit_log"], json!([]));

    let uri = format!("/sessions/{sid}/edits");
    let (status, body) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"kind": "move_author", "author": "NNS-77", "target": "singletons"})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "UnknownAuthor");

    let (status, after) = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({"kind": "move_author", "author": "NNS-1", "target": "singletons", "timestamp_ms": 7})),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{after}");
    assert_eq!(after["singletons"], json!(["NNS-1"]));
    assert_eq!(after["edit_log"][0]["timestamp_ms"], 7);
    assert_eq!(call(&app, Method::GET, &format!("/sessions/{sid}"), None).await.1, after);

    let (status, body) = call(&app, Method::POST, &uri, Some(json!({"kind": "set_k", "k": 40}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "KOutOfRange");
    let (status, _) = call(&app, Method::POST, &uri, Some(json!({"kind": "fly"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, undone) = call(&app, Method::POST, &format!("/sessions/{sid}/undo"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(undone, s);
    let (status, body) = call(&app, Method::POST, &format!("/sessions/{sid}/undo"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "NothingToUndo");
}

#[tokio::test]
async fn recommendations_and_scatter() {
    let (app, id) = fixture_app().await;
    let s = new_session(&app, &id, "NNS", "collaborative").await;
    let sid = s["id"].as_str().unwrap();
    let cluster_of_1: Vec<Value> = s["clusters"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["members"].as_array().unwrap().contains(&json!("NNS-1")))
        .unwrap()["members"]
        .as_array()
        .unwrap()
        .clone();

    let uri = format!("/sessions/{sid}/authors/NNS-1/recommendations");
    let (status, recs) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(status, StatusCode::OK);
    let recs = recs.as_array().unwrap();
    assert_eq!(recs.len(), 5);
    let scores: Vec<f64> = recs.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));
    assert!(recs.iter().all(|r| !cluster_of_1.contains(&r["candidate"])));

    let (_, two) = call(&app, Method::GET, &format!("{uri}?k=2&scale=normalized"), None).await;
    assert_eq!(two.as_array().unwrap().len(), 2);
    assert_eq!(call(&app, Method::GET, &format!("{uri}?scale=cubic"), None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(
        call(&app, Method::GET, &format!("/sessions/{sid}/authors/NNS-99/recommendations"), None).await.0,
        StatusCode::NOT_FOUND
    );

    let (status, sc) = call(&app, Method::GET, &format!("/sessions/{sid}/authors/NNS-1/scatter"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sc["query"], "NNS-1");
    let points = sc["points"].as_array().unwrap();
    assert_eq!(points.len(), 9);
    for p in points {
        if cluster_of_1.contains(&p["other"]) {
            assert_eq!(p["d1"], 0.0);
        }
    }
}

#[tokio::test]
async fn transitions_carry_display_hint() {
    let (app, id) = fixture_app().await;
    let (status, body) = call(&app, Method::GET, &format!("/datasets/{id}/authors/NNS-1/collaborative/transitions"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["display_hint"], json!({"hide_outgoing_from": ["Writing"]}));
    assert_eq!(body["profile"]["author"], "NNS-1");
    // Entries leaving Writing are kept in the data.
    assert!(body["profile"]["entries"].as_array().unwrap().iter().any(|e| e["source"] == "Writing"));
    let sum: f64 = body["profile"]["entries"].as_array().unwrap().iter().map(|e| e["frequency"].as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);
    let (status, body) = call(&app, Method::GET, &format!("/datasets/{id}/authors/NS-42/individual/transitions"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "UnknownAuthor");
}

#[tokio::test]
async fn offline_summary_is_recorded_as_edit() {
    let (app, id) = fixture_app().await;
    let s = new_session(&app, &id, "NS", "individual").await;
    let sid = s["id"].as_str().unwrap();
    let cid = s["clusters"][0]["id"].as_u64().unwrap();
    let uri = format!("/sessions/{sid}/clusters/{cid}/summary?offline=true");
    let (status, after) = call(&app, Method::POST, &uri, None).await;
    assert_eq!(status, StatusCode::OK, "{after}");
    let summary = &after["clusters"][0]["summary"];
    assert_eq!(summary["source"], "fallback");
    assert_eq!(after["edit_log"][0]["kind"], "regenerate_summary");
    // Deterministic: a second request gives the same summary.
    let (_, again) = call(&app, Method::POST, &uri, None).await;
    assert_eq!(&again["clusters"][0]["summary"], summary);
    let (status, body) = call(&app, Method::POST, &format!("/sessions/{sid}/clusters/999/summary"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "UnknownCluster");
}

#[tokio::test]
async fn comparison_does_not_add_crossings() {
    let (app, id) = fixture_app().await;
    let uri = format!("/datasets/{id}/comparison?left=NS-individual&right=NNS-individual");
    let (status, body) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["arrows"].as_array().unwrap().len(), 10);
    assert!(body["crossings"].as_u64().unwrap() <= body["initial_crossings"].as_u64().unwrap());

    let s = new_session(&app, &id, "NS", "individual").await;
    let sid = s["id"].as_str().unwrap();
    let (status, _) = call(&app, Method::GET, &format!("{uri}&left_session={sid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, Method::GET, &format!("{uri}&right_session={sid}"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "CollectionMismatch");
    assert_eq!(
        call(&app, Method::GET, &format!("/datasets/{id}/comparison?left=NS-individual"), None).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn repeated_gets_are_identical() {
    let (app, id) = fixture_app().await;
    let s = new_session(&app, &id, "NS", "collaborative").await;
    let sid = s["id"].as_str().unwrap();
    for uri in [
        format!("/datasets/{id}/stats"),
        format!("/sessions/{sid}"),
        format!("/sessions/{sid}/authors/NS-2/recommendations"),
        format!("/sessions/{sid}/authors/NS-2/scatter"),
        format!("/datasets/{id}/comparison?left=NS-collaborative&right=NNS-collaborative"),
    ] {
        let a = call(&app, Method::GET, &uri, None).await;
        let b = call(&app, Method::GET, &uri, None).await;
        assert_eq!(a, b, "{uri}");
    }
}

#[tokio::test]
async fn cors_headers_are_sent() {
    let mut cfg = config();
    cfg.cors_origin = Some("http://localhost:5173".into());
    let app = app_with(&cfg);
    let req = Request::builder()
        .method(Method::GET)
        .uri("/health")
        .header(header::ORIGIN, "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
}

#[tokio::test]
async fn data_dir_persists_datasets_and_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.data_dir = Some(dir.path().to_path_buf());
    let app = app_with(&cfg);
    let (_, info) = upload(&app, "fixture.csv", FIXTURE).await;
    let id = info["id"].as_str().unwrap();
    let s = new_session(&app, id, "NS", "individual").await;
    let (_, edited) = call(
        &app,
        Method::POST,
        &format!("/sessions/{}/edits", s["id"].as_str().unwrap()),
        Some(json!({"kind": "add_cluster", "timestamp_ms": 1})),
    )
    .await;

    let saved = std::fs::read(dir.path().join("sessions").join("s1.json")).unwrap();
    assert_eq!(serde_json::to_value(load_session(&saved).unwrap()).unwrap(), edited);

    // A fresh server over the same directory sees both, and numbers new sessions after them.
    let app = app_with(&cfg);
    assert_eq!(call(&app, Method::GET, "/sessions/s1", None).await.1, edited);
    let s2 = new_session(&app, id, "NS", "individual").await;
    assert_eq!(s2["id"], "s2");
}

#[tokio::test]
async fn preload_and_bad_config() {
    let mut cfg = config();
    cfg.preload = vec![concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fixture.csv").into()];
    let app = app_with(&cfg);
    assert_eq!(call(&app, Method::GET, "/collections/NS/individual/consensus", None).await.0, StatusCode::OK);

    cfg.preload = vec!["/nonexistent/log.csv".into()];
    assert!(matches!(app_state(&cfg), Err(ServeError::BadConfig(_))));
    let mut cfg = config();
    cfg.alpha = -1.0;
    assert!(matches!(app_state(&cfg), Err(ServeError::BadConfig(_))));
    let cfg = config();
    assert!(matches!(router(app_state(&cfg).unwrap(), Some("bad\norigin")), Err(ServeError::BadConfig(_))));
}

#[tokio::test]
async fn busy_port_is_reported() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let mut cfg = config();
    cfg.port = listener.local_addr().unwrap().port();
    let err = penflow::api::serve(cfg).await.unwrap_err();
    assert!(matches!(err, ServeError::PortInUse(_)), "{err}");
}

#[tokio::test]
async fn concurrent_edits_are_serialized() {
    let (app, id) = fixture_app().await;
    let s = new_session(&app, &id, "NS", "individual").await;
    let sid = s["id"].as_str().unwrap().to_string();
    let app = Arc::new(app);
    let mut tasks = Vec::new();
    for i in 0..8u64 {
        let (app, sid) = (app.clone(), sid.clone());
        tasks.push(tokio::spawn(async move {
            call(&app, Method::POST, &format!("/sessions/{sid}/edits"), Some(json!({"kind": "add_cluster", "timestamp_ms": i})))
                .await
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::OK);
    }
    let (_, state) = call(&app, Method::GET, &format!("/sessions/{sid}"), None).await;
    assert_eq!(state["edit_log"].as_array().unwrap().len(), 8);
    let ids: std::collections::BTreeSet<u64> =
        state["clusters"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids.len(), state["clusters"].as_array().unwrap().len());
}
