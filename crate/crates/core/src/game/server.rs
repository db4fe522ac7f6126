//! HTTP front end for the event store.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::event::EventInput;
use super::protocol::ProtocolId;
use super::store::{EventStore, ExportFilter};
use crate::error::Error;

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub protocol: String,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub filter: String,
}

struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::UnknownSession(_) => StatusCode::NOT_FOUND,
            Error::SessionClosed(_) | Error::OutOfOrderTick { .. } | Error::DuplicateEvent(_) => StatusCode::CONFLICT,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        let body = json!({ "error": self.0.kind(), "message": self.0.to_string() });
        (status, Json(body)).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(store: Arc<EventStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/events", post(record_events))
        .route("/sessions/{id}/summary", get(summary))
        .route("/export", get(export))
        .with_state(store)
}

async fn create_session(State(store): State<Arc<EventStore>>, Json(req): Json<CreateSession>) -> ApiResult<impl IntoResponse> {
    let id: ProtocolId = req.protocol.parse()?;
    let cfg = store.create_session(id, req.rho, req.seed.unwrap_or(0))?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": cfg.session_id, "config": cfg })),
    ))
}

async fn record_events(
    State(store): State<Arc<EventStore>>,
    Path(id): Path<String>,
    Json(events): Json<Vec<EventInput>>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(store.record_events(&id, &events)?))
}

async fn summary(State(store): State<Arc<EventStore>>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(store.summary(&id)?))
}

async fn export(State(store): State<Arc<EventStore>>, Query(q): Query<ExportQuery>) -> ApiResult<impl IntoResponse> {
    let filter: ExportFilter = q.filter.parse()?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], store.export(&filter)))
}

/// Serve until the process is stopped.
pub async fn serve(store: Arc<EventStore>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    axum::serve(listener, router(store)).await
}
