//! JSON-over-HTTP session API.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hazardline::engine::SessionInfo;
use hazardline::{MemoryEntry, QueryResponse, SessionRegistry, TurnError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryBody {
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
    pub indices_loaded: bool,
    pub passages: usize,
    pub tables: usize,
    pub sessions: usize,
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: impl ToString) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: error.to_string(),
                trace_id: None,
            },
        }
    }
}

impl From<TurnError> for ApiError {
    fn from(e: TurnError) -> Self {
        match e {
            TurnError::IndicesNotLoaded => ApiError::new(StatusCode::SERVICE_UNAVAILABLE, &e),
            TurnError::UnknownSession(_) => ApiError::new(StatusCode::NOT_FOUND, &e),
            TurnError::Failed { ref trace_id, .. } => ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                body: ErrorBody {
                    trace_id: Some(trace_id.clone()),
                    error: e.to_string(),
                },
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type Shared = Arc<SessionRegistry>;

pub fn router(registry: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/query", post(query))
        .route("/sessions/{id}/history", get(history))
        .with_state(registry)
}

async fn health(State(reg): State<Shared>) -> Json<Health> {
    let engine = reg.engine();
    Json(Health {
        status: if engine.indices_loaded() { "ok" } else { "unindexed" }.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        indices_loaded: engine.indices_loaded(),
        passages: engine.corpus.count(),
        tables: engine.store.as_ref().map_or(0, |s| s.tables().len()),
        sessions: reg.len(),
    })
}

async fn create_session(State(reg): State<Shared>) -> Result<(StatusCode, Json<SessionInfo>), ApiError> {
    let info = reg
        .create()
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn query(
    State(reg): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<QueryBody>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(body) = body.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.body_text()))?;
    if body.text.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "`text` must not be blank"));
    }
    // turns block on model, search and rerank clients
    let resp = tokio::task::spawn_blocking(move || reg.query(&id, &body.text))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))??;
    Ok(Json(resp))
}

async fn history(State(reg): State<Shared>, Path(id): Path<String>) -> Result<Json<Vec<MemoryEntry>>, ApiError> {
    Ok(Json(reg.history(&id)?))
}
