//! `/v1` HTTP API over in-memory verification sessions.
//!
//! Each session is guarded by its own lock: mutations are exclusive, reads
//! run concurrently, and distinct sessions never contend beyond the brief
//! registry lookup.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use fsg_core::pipeline::EdgeSlot;
use fsg_core::{EdgeId, InferenceConfig, Pipeline, ProposalFile, SceneGraph};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::args::ServeArgs;
use crate::view::{edge_views, graph_view, suggestions};
use crate::CliError;

/// Environment variable that overrides `--port`.
pub const PORT_ENV: &str = "FUNFACT_PORT";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub tau: f64,
    pub pipeline: Pipeline,
}

#[derive(Debug, Default)]
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<RwLock<Session>>>>,
    state_dir: Option<PathBuf>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    pub fn new(state_dir: Option<PathBuf>) -> Self {
        AppState {
            sessions: RwLock::new(HashMap::new()),
            state_dir,
        }
    }

    /// Restores every readable `<id>.json` snapshot in the state directory.
    pub fn load_snapshots(&self) -> Result<usize, CliError> {
        let Some(dir) = &self.state_dir else {
            return Ok(0);
        };
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let entries =
            fs::read_dir(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut map = self.sessions.write().expect("session registry poisoned");
        for entry in entries.flatten() {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            match fs::read_to_string(&path).map(|s| serde_json::from_str::<Session>(&s)) {
                Ok(Ok(s)) => {
                    map.insert(s.id.clone(), Arc::new(RwLock::new(s)));
                }
                Ok(Err(e)) => eprintln!("skipping snapshot {}: {e}", path.display()),
                Err(e) => eprintln!("skipping snapshot {}: {e}", path.display()),
            }
        }
        Ok(map.len())
    }

    fn session(&self, id: &str) -> Result<Arc<RwLock<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session registry poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session '{id}'")))
    }

    fn persist(&self, session: &Session) -> Result<(), ApiError> {
        let Some(dir) = &self.state_dir else {
            return Ok(());
        };
        write_snapshot(dir, session)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))
    }
}

fn write_snapshot(dir: &Path, session: &Session) -> Result<(), String> {
    let text = serde_json::to_string(session).map_err(|e| e.to_string())?;
    let tmp = dir.join(format!("{}.json.tmp", session.id));
    let dst = dir.join(format!("{}.json", session.id));
    fs::write(&tmp, text)
        .and_then(|_| fs::rename(&tmp, &dst))
        .map_err(|e| format!("{}: {e}", dst.display()))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<fsg_core::Error> for ApiError {
    fn from(e: fsg_core::Error) -> Self {
        use fsg_core::Error as E;
        let status = match &e {
            E::NotFound(_) => StatusCode::NOT_FOUND,
            E::Conflict(_) => StatusCode::CONFLICT,
            E::Io { .. } | E::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::unprocessable(format!("invalid body: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, ApiError> {
    serde_json::to_value(v)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    scene: SceneGraph,
    #[serde(default)]
    proposals: ProposalFile,
    #[serde(default)]
    config: InferenceConfig,
    #[serde(default = "default_tau")]
    tau: f64,
}

fn default_tau() -> f64 {
    0.5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvidenceBody {
    edge: EdgeId,
    observed: bool,
}

#[derive(Debug, Deserialize)]
struct SuggestQuery {
    limit: Option<usize>,
}

fn graph_json(s: &Session) -> Result<Value, ApiError> {
    let posterior = s.pipeline.posterior()?;
    to_value(&graph_view(Some(&s.id), &s.pipeline, &posterior, s.tau))
}

fn component_json(s: &Session, slot: EdgeSlot) -> Result<Value, ApiError> {
    let p = &s.pipeline;
    let comp = &p.components[slot.component];
    let posterior: Vec<_> = p
        .posterior()?
        .into_iter()
        .filter(|e| p.slot(&e.id).is_some_and(|x| x.component == slot.component))
        .collect();
    let log_partition = p.summary().result_for(comp.id).map(|r| r.log_partition);
    Ok(json!({
        "id": s.id,
        "component": slot.component,
        "edges": to_value(&edge_views(p, &posterior, s.tau))?,
        "log_partition": log_partition,
    }))
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(
    State(state): State<SharedState>,
    body: Bytes,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: CreateSession = parse_body(&body)?;
    if !(0.0..=1.0).contains(&req.tau) {
        return Err(ApiError::unprocessable(format!(
            "tau {} must lie in [0,1]",
            req.tau
        )));
    }
    let proposals = req.proposals.to_proposals()?;
    let pipeline = Pipeline::new(req.scene, proposals, req.config)?;
    let session = Session {
        id: uuid::Uuid::new_v4().to_string(),
        tau: req.tau,
        pipeline,
    };
    state.persist(&session)?;
    let graph = graph_json(&session)?;
    let id = session.id.clone();
    state
        .sessions
        .write()
        .expect("session registry poisoned")
        .insert(id.clone(), Arc::new(RwLock::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(json!({ "id": id, "graph": graph })),
    ))
}

async fn get_graph(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let s = s.read().expect("session poisoned");
    Ok(Json(graph_json(&s)?))
}

async fn post_evidence(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let req: EvidenceBody = parse_body(&body)?;
    let mut s = s.write().expect("session poisoned");
    let slot = s.pipeline.set_evidence(&req.edge, req.observed)?;
    state.persist(&s)?;
    Ok(Json(component_json(&s, slot)?))
}

async fn delete_evidence(
    State(state): State<SharedState>,
    UrlPath((id, edge)): UrlPath<(String, String)>,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let mut s = s.write().expect("session poisoned");
    let slot = s.pipeline.retract(&EdgeId(edge))?;
    state.persist(&s)?;
    Ok(Json(component_json(&s, slot)?))
}

async fn suggest(
    State(state): State<SharedState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<SuggestQuery>,
) -> Result<Json<Value>, ApiError> {
    let s = state.session(&id)?;
    let s = s.read().expect("session poisoned");
    let mut list = suggestions(&s.pipeline)?;
    if let Some(n) = q.limit {
        list.truncate(n);
    }
    Ok(Json(json!({ "id": s.id, "suggestions": to_value(&list)? })))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/graph", get(get_graph))
        .route("/v1/sessions/{id}/evidence", post(post_evidence))
        .route("/v1/sessions/{id}/evidence/{edge}", delete(delete_evidence))
        .route("/v1/sessions/{id}/suggest", get(suggest))
        .with_state(state)
}

/// `--port`, unless the environment variable holds a valid port.
pub fn resolve_port(flag: u16, env: Option<&str>) -> Result<u16, CliError> {
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("{PORT_ENV}='{v}' is not a valid port"))),
        None => Ok(flag),
    }
}

pub fn serve(a: ServeArgs) -> Result<(), CliError> {
    let env = std::env::var(PORT_ENV).ok();
    let port = resolve_port(a.port, env.as_deref())?;
    let state = Arc::new(AppState::new(a.state_dir));
    let restored = state.load_snapshots()?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async move {
        let addr = format!("{}:{port}", a.bind);
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::Io(format!("{addr}: {e}")))?;
        eprintln!("listening on {addr} ({restored} sessions restored)");
        axum::serve(listener, router(state))
            .await
            .map_err(|e| CliError::Io(e.to_string()))
    })
}
