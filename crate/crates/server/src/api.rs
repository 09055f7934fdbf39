//! HTTP endpoints. Every body is JSON; errors are `{"code", "message"}` with
//! the status from [`crate::error::status_for`].
//!
//! | method | path | body / query | response |
//! |---|---|---|---|
//! | GET | `/health` | | `{"status":"ok"}` |
//! | POST | `/datasets` | multipart field `file` (`.csv` or `.json`), optional `format` | [`DatasetInfo`], 201 |
//! | GET | `/datasets` | | list of dataset ids |
//! | GET | `/datasets/{id}/stats` | | [`StatsReport`] |
//! | GET | `/datasets/{id}/collections/{role}/{stage}/consensus` | `k` | `ConsensusResult` |
//! | GET | `/collections/{role}/{stage}/consensus` | `k` | same, on the latest dataset |
//! | POST | `/sessions` | [`CreateSession`] | `SessionState`, 201 |
//! | GET | `/sessions/{id}` | | `SessionState` |
//! | POST | `/sessions/{id}/edits` | an edit, `{"kind": ..., "timestamp_ms"?}` | `SessionState` |
//! | POST | `/sessions/{id}/undo` | | `SessionState` |
//! | GET | `/sessions/{id}/authors/{aid}/recommendations` | `k` (5), `scale` (`raw`) | list of `Recommendation` |
//! | GET | `/sessions/{id}/authors/{aid}/scatter` | `scale` (`raw`) | [`Scatter`] |
//! | GET | `/datasets/{id}/authors/{aid}/{stage}/transitions` | | [`Transitions`] |
//! | POST | `/sessions/{id}/clusters/{cid}/summary` | `offline` | `SessionState` |
//! | GET | `/datasets/{id}/comparison` | `left`, `right`, `left_session`, `right_session`, `left_k`, `right_k` | `ComparisonLayout` |

use std::collections::HashMap;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use penflow_core::consensus::ConsensusError;
use penflow_core::ingest::{AuthorId, CollectionKey, LogFormat, Role, StageKind};
use penflow_core::insight::{
    comparison_layout, recommend, scatter_coords, transition_profile, ComparisonLayout, DisplayHint, DistanceScale,
    Recommendation, ScatterPoint, TransitionProfile, DEFAULT_RECOMMENDATIONS,
};
use penflow_core::session::{
    apply_edit, init_session_with, undo, Edit, EditKind, SessionConfig, SessionError, SessionState,
};
use penflow_core::summarize::{AuditLog, SummarizeError, Summarizer};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::backend::HttpBackend;
use crate::error::ApiError;
use crate::report::{stats_report, StatsReport};
use crate::store::{sniff_format, Dataset, Store};

pub struct AppState {
    pub store: Store,
    pub backend: Option<HttpBackend>,
    pub timeout: Duration,
}

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, ServeError> {
    let origin = match cors_origin {
        Some(o) => AllowOrigin::exact(
            HeaderValue::from_str(o).map_err(|_| ServeError::BadConfig(format!("invalid CORS origin {o:?}")))?,
        ),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    Ok(Router::new()
        .route("/health", get(health))
        .route("/datasets", post(upload).get(list_datasets))
        .route("/datasets/{id}/stats", get(stats))
        .route("/datasets/{id}/collections/{role}/{stage}/consensus", get(dataset_consensus))
        .route("/collections/{role}/{stage}/consensus", get(default_consensus))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/edits", post(post_edit))
        .route("/sessions/{id}/undo", post(post_undo))
        .route("/sessions/{id}/authors/{aid}/recommendations", get(recommendations))
        .route("/sessions/{id}/authors/{aid}/scatter", get(scatter))
        .route("/datasets/{id}/authors/{aid}/{stage}/transitions", get(transitions))
        .route("/sessions/{id}/clusters/{cid}/summary", post(summary))
        .route("/datasets/{id}/comparison", get(comparison))
        .layer(cors)
        .with_state(state))
}

/// Run `f` on the blocking pool. Clustering and backend calls are CPU or
/// network bound and must stay off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse<T: std::str::FromStr>(what: &str, value: &str) -> Result<T, ApiError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ApiError::bad_request(format!("invalid {what} {value:?}: {e}")))
}

fn query_opt<T: std::str::FromStr>(q: &HashMap<String, String>, name: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    q.get(name).filter(|v| !v.is_empty()).map(|v| parse(name, v)).transpose()
}

fn scale_param(q: &HashMap<String, String>) -> Result<DistanceScale, ApiError> {
    match q.get("scale").map(String::as_str) {
        None | Some("") | Some("raw") => Ok(DistanceScale::Raw),
        Some("normalized") => Ok(DistanceScale::Normalized),
        Some(other) => Err(ApiError::bad_request(format!("invalid scale {other:?}: expected raw or normalized"))),
    }
}

fn json_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CollectionInfo {
    pub key: String,
    pub authors: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub id: String,
    pub format: LogFormat,
    pub records: usize,
    pub collections: Vec<CollectionInfo>,
}

fn dataset_info(d: &Dataset) -> DatasetInfo {
    DatasetInfo {
        id: d.id.clone(),
        format: d.format,
        records: d.records.len(),
        collections: d.collections.iter().map(|c| CollectionInfo { key: c.key().to_string(), authors: c.len() }).collect(),
    }
}

async fn upload(
    State(app): Shared,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<(StatusCode, Json<DatasetInfo>), ApiError> {
    let mut multipart = multipart.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let mut file: Option<(Option<String>, Bytes)> = None;
    let mut format: Option<String> = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
        match field.name() {
            Some("file") => {
                let name = field.file_name().map(str::to_string);
                let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
                file = Some((name, bytes));
            }
            Some("format") => format = Some(field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?),
            _ => {}
        }
    }
    let (name, bytes) = file.ok_or_else(|| ApiError::bad_request("missing multipart field \"file\""))?;
    let format = match (format.as_deref(), name.as_deref()) {
        (Some("csv"), _) => LogFormat::Csv,
        (Some("json"), _) => LogFormat::Json,
        (Some(other), _) => return Err(ApiError::bad_request(format!("invalid format {other:?}: expected csv or json"))),
        (None, Some(n)) if n.ends_with(".csv") || n.ends_with(".json") => LogFormat::from_path(n),
        (None, _) => sniff_format(&bytes),
    };
    let info = blocking(move || app.store.add_dataset(&bytes, format).map(|d| dataset_info(&d))).await?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_datasets(State(app): Shared) -> Json<Vec<String>> {
    Json(app.store.dataset_ids())
}

async fn stats(State(app): Shared, Path(id): Path<String>) -> ApiResult<StatsReport> {
    let d = app.store.dataset(&id)?;
    Ok(Json(blocking(move || Ok(stats_report(&d.collections))).await?))
}

fn collection_key(role: &str, stage: &str) -> Result<CollectionKey, ApiError> {
    Ok(CollectionKey::new(parse::<Role>("role", role)?, parse::<StageKind>("stage", stage)?))
}

async fn consensus_on(
    d: Arc<Dataset>,
    key: CollectionKey,
    q: HashMap<String, String>,
) -> ApiResult<penflow_core::consensus::ConsensusResult> {
    let k: Option<usize> = query_opt(&q, "k")?;
    blocking(move || {
        let analysis = d.analysis(key)?;
        let k = match k {
            Some(k) => k,
            None => analysis.default_k().map_err(ApiError::from)?,
        };
        Ok(Json(analysis.consensus(k)?))
    })
    .await
}

async fn dataset_consensus(
    State(app): Shared,
    Path((id, role, stage)): Path<(String, String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<penflow_core::consensus::ConsensusResult> {
    let d = app.store.dataset(&id)?;
    consensus_on(d, collection_key(&role, &stage)?, q).await
}

async fn default_consensus(
    State(app): Shared,
    Path((role, stage)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<penflow_core::consensus::ConsensusResult> {
    let d = app.store.default_dataset()?;
    consensus_on(d, collection_key(&role, &stage)?, q).await
}

/// Body of `POST /sessions`. `dataset` defaults to the latest upload.
#[derive(Debug, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub dataset: Option<String>,
    pub role: Role,
    pub stage: StageKind,
    #[serde(default)]
    pub config: Option<SessionConfig>,
}

async fn create_session(State(app): Shared, body: Bytes) -> Result<(StatusCode, Json<SessionState>), ApiError> {
    let req: CreateSession = json_body(&body)?;
    let d = match &req.dataset {
        Some(id) => app.store.dataset(id)?,
        None => app.store.default_dataset()?,
    };
    let state = blocking(move || {
        let analysis = d.analysis(CollectionKey::new(req.role, req.stage))?;
        let id = app.store.new_session_id();
        let state = init_session_with(&id, Some(d.id.clone()), &analysis, req.config.unwrap_or_default())?;
        app.store.insert_session(state.clone())?;
        Ok(state)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(state)))
}

async fn get_session(State(app): Shared, Path(id): Path<String>) -> ApiResult<SessionState> {
    let handle = app.store.session(&id)?;
    let state = handle.lock().unwrap_or_else(|e| e.into_inner()).clone();
    Ok(Json(state))
}

fn session_dataset(app: &AppState, state: &SessionState) -> Result<Arc<Dataset>, ApiError> {
    let id = state
        .collection
        .dataset
        .as_deref()
        .ok_or_else(|| ApiError::internal(format!("session {} has no dataset", state.id)))?;
    app.store.dataset(id)
}

/// Apply `step` to a session under its lock, then persist and return the result.
async fn update_session<F>(app: Arc<AppState>, id: String, step: F) -> ApiResult<SessionState>
where
    F: FnOnce(&AppState, &SessionState, &penflow_core::consensus::CollectionAnalysis) -> Result<SessionState, ApiError>
        + Send
        + 'static,
{
    let handle = app.store.session(&id)?;
    blocking(move || {
        let mut guard = handle.lock().unwrap_or_else(|e| e.into_inner());
        let d = session_dataset(&app, &guard)?;
        let analysis = d.analysis(guard.collection.key)?;
        let next = step(&app, &guard, &analysis)?;
        app.store.persist_session(&next)?;
        *guard = next.clone();
        Ok(Json(next))
    })
    .await
}

#[derive(Deserialize)]
struct EditRequest {
    #[serde(flatten)]
    kind: EditKind,
    #[serde(default)]
    timestamp_ms: Option<u64>,
}

async fn post_edit(State(app): Shared, Path(id): Path<String>, body: Bytes) -> ApiResult<SessionState> {
    let req: EditRequest = json_body(&body)?;
    let edit = Edit { kind: req.kind, timestamp_ms: req.timestamp_ms.unwrap_or_else(now_ms) };
    update_session(app, id, move |_, state, analysis| Ok(apply_edit(state, analysis, edit)?)).await
}

async fn post_undo(State(app): Shared, Path(id): Path<String>) -> ApiResult<SessionState> {
    update_session(app, id, |_, state, analysis| Ok(undo(state, analysis)?)).await
}

/// Snapshot of a session with its collection analysis.
async fn session_view<T, F>(app: Arc<AppState>, id: String, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&SessionState, &penflow_core::consensus::CollectionAnalysis) -> Result<T, ApiError> + Send + 'static,
{
    let handle = app.store.session(&id)?;
    let state = handle.lock().unwrap_or_else(|e| e.into_inner()).clone();
    blocking(move || {
        let d = session_dataset(&app, &state)?;
        let analysis = d.analysis(state.collection.key)?;
        Ok(Json(f(&state, &analysis)?))
    })
    .await
}

async fn recommendations(
    State(app): Shared,
    Path((id, aid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Vec<Recommendation>> {
    let author: AuthorId = parse("author", &aid)?;
    let k = query_opt(&q, "k")?.unwrap_or(DEFAULT_RECOMMENDATIONS);
    let scale = scale_param(&q)?;
    session_view(app, id, move |state, analysis| Ok(recommend(author, state, analysis.collection(), k, scale)?)).await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Scatter {
    pub query: AuthorId,
    pub points: Vec<ScatterPoint>,
}

async fn scatter(
    State(app): Shared,
    Path((id, aid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Scatter> {
    let author: AuthorId = parse("author", &aid)?;
    let scale = scale_param(&q)?;
    session_view(app, id, move |state, analysis| {
        Ok(Scatter { query: author, points: scatter_coords(author, state, analysis.collection(), scale)? })
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Transitions {
    pub profile: TransitionProfile,
    pub display_hint: DisplayHint,
}

async fn transitions(
    State(app): Shared,
    Path((id, aid, stage)): Path<(String, String, String)>,
) -> ApiResult<Transitions> {
    let author: AuthorId = parse("author", &aid)?;
    let stage: StageKind = parse("stage", &stage)?;
    let d = app.store.dataset(&id)?;
    let seq = d
        .collections
        .get(CollectionKey::new(author.role, stage))
        .get(author)
        .ok_or(SessionError::UnknownAuthor(author))?;
    Ok(Json(Transitions { profile: transition_profile(seq), display_hint: DisplayHint::default() }))
}

fn summarizer(app: &AppState, offline: bool) -> Summarizer {
    let Some(backend) = app.backend.clone().filter(|_| !offline) else {
        return Summarizer::offline();
    };
    let s = Summarizer::with_backend(Box::new(backend)).timeout(app.timeout);
    match app.store.data_dir() {
        Some(dir) => s.audit(AuditLog::new(dir.join("audit.jsonl"))),
        None => s,
    }
}

async fn summary(
    State(app): Shared,
    Path((id, cid)): Path<(String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<SessionState> {
    let cluster: u32 = parse("cluster", &cid)?;
    let offline = query_opt::<bool>(&q, "offline")?.unwrap_or(false);
    update_session(app, id, move |app, state, analysis| {
        let members = &state.cluster(cluster).ok_or(SessionError::UnknownCluster(cluster))?.members;
        if members.is_empty() {
            return Err(SummarizeError::EmptyCluster.into());
        }
        let profiles: Vec<TransitionProfile> = members
            .iter()
            .filter_map(|&a| analysis.collection().get(a))
            .map(transition_profile)
            .collect();
        let summary = summarizer(app, offline).summarize_cluster(cluster, &profiles)?;
        let edit = Edit { kind: EditKind::RegenerateSummary { cluster, summary }, timestamp_ms: now_ms() };
        Ok(apply_edit(state, analysis, edit)?)
    })
    .await
}

/// Cluster blocks of one side of the comparison panel.
fn blocks(
    app: &AppState,
    d: &Dataset,
    key: CollectionKey,
    session: Option<&str>,
    k: Option<usize>,
) -> Result<Vec<Vec<AuthorId>>, ApiError> {
    if let Some(id) = session {
        let state = app.store.session(id)?.lock().unwrap_or_else(|e| e.into_inner()).clone();
        if state.collection.key != key || state.collection.dataset.as_deref() != Some(d.id.as_str()) {
            return Err(SessionError::CollectionMismatch(key).into());
        }
        let mut out: Vec<Vec<AuthorId>> =
            state.clusters.iter().filter(|c| !c.members.is_empty()).map(|c| c.members.clone()).collect();
        out.extend(state.singletons.iter().map(|&a| vec![a]));
        return Ok(out);
    }
    let analysis = d.analysis(key)?;
    let k = match (k, analysis.default_k()) {
        (Some(k), _) => k,
        (None, Ok(k)) => k,
        // Too few patterns to cluster: every author stands alone.
        (None, Err(ConsensusError::NTooSmall { .. })) => {
            return Ok(analysis.collection().authors().into_iter().map(|a| vec![a]).collect())
        }
        (None, Err(e)) => return Err(e.into()),
    };
    let r = analysis.consensus(k)?;
    let mut out: Vec<Vec<AuthorId>> = r.clusters.into_iter().map(|c| c.members).collect();
    out.extend(r.singletons.into_iter().map(|a| vec![a]));
    Ok(out)
}

async fn comparison(
    State(app): Shared,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<ComparisonLayout> {
    let d = app.store.dataset(&id)?;
    let side = |name: &str| -> Result<CollectionKey, ApiError> {
        let v = q.get(name).ok_or_else(|| ApiError::bad_request(format!("missing query parameter {name}")))?;
        parse(name, v)
    };
    let (left, right) = (side("left")?, side("right")?);
    let (left_k, right_k) = (query_opt(&q, "left_k")?, query_opt(&q, "right_k")?);
    let (left_session, right_session) = (q.get("left_session").cloned(), q.get("right_session").cloned());
    blocking(move || {
        let l = blocks(&app, &d, left, left_session.as_deref(), left_k)?;
        let r = blocks(&app, &d, right, right_session.as_deref(), right_k)?;
        Ok(Json(comparison_layout(&l, &r)))
    })
    .await
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
pub struct ServeConfig {
    pub host: IpAddr,
    pub port: u16,
    pub data_dir: Option<PathBuf>,
    pub backend: Option<HttpBackend>,
    pub timeout: Duration,
    pub alpha: f64,
    pub cors_origin: Option<String>,
    /// Logs loaded at startup, in order; the last becomes the default dataset.
    pub preload: Vec<PathBuf>,
}

/// Build the application state a config describes.
pub fn app_state(config: &ServeConfig) -> Result<Arc<AppState>, ServeError> {
    if !(config.alpha.is_finite() && config.alpha > 0.0) {
        return Err(ServeError::BadConfig(format!("alpha must be positive, got {}", config.alpha)));
    }
    let store = match &config.data_dir {
        Some(dir) => Store::open(dir, config.alpha)
            .map_err(|e| ServeError::BadConfig(format!("data directory {}: {e}", dir.display())))?,
        None => Store::new(None, config.alpha),
    };
    for path in &config.preload {
        let bytes = std::fs::read(path).map_err(|e| ServeError::BadConfig(format!("{}: {e}", path.display())))?;
        store
            .add_dataset(&bytes, LogFormat::from_path(&path.to_string_lossy()))
            .map_err(|e| ServeError::BadConfig(format!("{}: {}", path.display(), e.message)))?;
    }
    Ok(Arc::new(AppState { store, backend: config.backend.clone(), timeout: config.timeout }))
}

pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let state = app_state(&config)?;
    let app = router(state, config.cors_origin.as_deref())?;
    let addr = SocketAddr::new(config.host, config.port);
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => ServeError::PortInUse(config.port),
        _ => ServeError::Io(e),
    })?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
