//! The HTTP service: a shared engine behind a read-write lock. Edits take
//! the write lock, queries and snapshots the read lock, so queries never
//! observe a partially applied edit and snapshots never block readers.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use editgate_core::engine::EditEngine;
use editgate_core::memory::MemoryStats;
use editgate_core::router::{RouteError, RoutePath};
use editgate_core::Error;

use crate::config::Config;

pub struct AppState {
    pub engine: RwLock<EditEngine>,
    pub snapshot_path: PathBuf,
}

/// Builds the engine from config (loading the snapshot when present), binds
/// the configured address, and serves until the process is killed. Prints
/// one `listening on {addr}` line once the port is bound.
pub fn serve(config: &Config) -> Result<(), Error> {
    let engine = config.build_engine(true)?;
    let state = Arc::new(AppState {
        engine: RwLock::new(engine),
        snapshot_path: config.persistence.memory_snapshot_path.clone(),
    });
    let listen_address = config.server.listen_address.clone();

    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = TcpListener::bind(&listen_address).await.map_err(|e| {
            Error::InvalidInput(format!("cannot bind {listen_address}: {e}"))
        })?;
        let addr = listener.local_addr()?;
        println!("listening on {addr}");
        axum::serve(listener, app(state)).await?;
        Ok(())
    })
}

pub fn app(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/edits", post(post_edits))
        .route("/query", post(post_query))
        .route("/memory/stats", get(get_stats))
        .route("/memory/snapshot", post(post_snapshot))
        .route("/health", get(get_health))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    id: Option<String>,
    query: String,
    answer: String,
}

#[derive(Debug, Serialize)]
struct EditResponse {
    edit_id: String,
    forms_stored: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    query: String,
}

#[derive(Debug, Serialize)]
struct QueryResponse {
    answer: String,
    path: RoutePath,
    #[serde(skip_serializing_if = "Option::is_none")]
    matched_edit_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    similarity: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SnapshotResponse {
    path: String,
    entries: usize,
}

#[derive(Debug, Serialize)]
struct HealthResponse {
    ok: bool,
}

async fn post_edits(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<EditRequest>, JsonRejection>,
) -> Result<Json<EditResponse>, ApiError> {
    let Json(request) = payload.map_err(ApiError::from_rejection)?;
    let applied = run_blocking(move || {
        let mut engine = state.engine.write();
        engine.apply_edit(request.id, &request.query, &request.answer)
    })
    .await?;
    Ok(Json(EditResponse { edit_id: applied.edit.id, forms_stored: applied.forms_stored }))
}

async fn post_query(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(request) = payload.map_err(ApiError::from_rejection)?;
    let routed = run_blocking(move || {
        let engine = state.engine.read();
        engine.answer(&request.query)
    })
    .await?;
    Ok(Json(QueryResponse {
        answer: routed.answer,
        path: routed.decision.path,
        matched_edit_id: routed.decision.matched_edit.map(|edit| edit.id),
        similarity: routed.decision.similarity,
    }))
}

async fn get_stats(State(state): State<Arc<AppState>>) -> Result<Json<MemoryStats>, ApiError> {
    let stats = run_blocking(move || Ok::<_, Error>(state.engine.read().stats())).await?;
    Ok(Json(stats))
}

async fn post_snapshot(
    State(state): State<Arc<AppState>>,
) -> Result<Json<SnapshotResponse>, ApiError> {
    let response = run_blocking(move || {
        let engine = state.engine.read();
        engine.snapshot(&state.snapshot_path)?;
        Ok::<_, Error>(SnapshotResponse {
            path: state.snapshot_path.display().to_string(),
            entries: engine.stats().entry_count,
        })
    })
    .await?;
    Ok(Json(response))
}

async fn get_health() -> Json<HealthResponse> {
    Json(HealthResponse { ok: true })
}

async fn run_blocking<T, E>(work: impl FnOnce() -> Result<T, E> + Send + 'static) -> Result<T, ApiError>
where
    T: Send + 'static,
    E: Into<ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(work).await {
        Ok(result) => result.map_err(Into::into),
        Err(join_error) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "backend_unavailable",
            message: format!("worker task failed: {join_error}"),
            detail: None,
        }),
    }
}

/// Wire-level error: `{"error": {"code", "message", "detail"?}}` with a
/// status matching the code.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Option<serde_json::Value>,
}

impl ApiError {
    fn from_rejection(rejection: JsonRejection) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: format!("invalid request body: {rejection}"),
            detail: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(error: Error) -> Self {
        let (status, code) = match &error {
            Error::InvalidInput(_) | Error::Io(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            Error::Schema { .. } | Error::DimensionMismatch { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "schema_error")
            }
            Error::Backend { .. } | Error::Embedding(_) => {
                (StatusCode::BAD_GATEWAY, "backend_unavailable")
            }
            Error::NotTrained(_) => (StatusCode::SERVICE_UNAVAILABLE, "not_trained"),
        };
        ApiError { status, code, message: error.to_string(), detail: None }
    }
}

impl From<RouteError> for ApiError {
    fn from(error: RouteError) -> Self {
        match error {
            RouteError::Prepare(inner) => inner.into(),
            RouteError::Dispatch { decision, source } => {
                let mut api: ApiError = source.into();
                api.detail = serde_json::to_value(&decision).ok();
                api
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = serde_json::json!({
            "code": self.code,
            "message": self.message,
        });
        if let Some(detail) = self.detail {
            error["detail"] = detail;
        }
        (self.status, Json(serde_json::json!({ "error": error }))).into_response()
    }
}
