use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::error::ServiceError;
use crate::session::{DecisionRequest, LiveState, SessionRequest};
use crate::store::SessionStore;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub n_trials: usize,
    pub state: LiveState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::Config(_) | ServiceError::InvalidDecision(_) => StatusCode::BAD_REQUEST,
            ServiceError::UnknownSession(_) | ServiceError::UnknownTrial(_) => StatusCode::NOT_FOUND,
            ServiceError::OutOfOrder(_) | ServiceError::SessionFinished | ServiceError::DuplicateSubmission(_) => {
                StatusCode::CONFLICT
            }
            ServiceError::Replay(_) | ServiceError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind().to_string(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}

type Shared = Arc<SessionStore>;

async fn create(State(store): State<Shared>, Json(req): Json<SessionRequest>) -> Result<impl IntoResponse, ServiceError> {
    let s = store.create(&req)?;
    tracing::info!(session = %s.session_id, trials = s.summary.n_trials, "session created");
    let body = Created {
        session_id: s.session_id,
        n_trials: s.summary.n_trials,
        state: s.state,
    };
    Ok((StatusCode::CREATED, Json(body)))
}

async fn advance(State(store): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(store.advance(&id)?))
}

async fn decision(
    State(store): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(store.submit(&id, &req)?))
}

async fn summary(State(store): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(store.summary(&id)?))
}

async fn log(State(store): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], store.log(&id)?))
}

async fn health() -> &'static str {
    "ok"
}

pub fn router(store: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create))
        .route("/sessions/{id}/advance", post(advance))
        .route("/sessions/{id}/decision", post(decision))
        .route("/sessions/{id}/summary", get(summary))
        .route("/sessions/{id}/log", get(log))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Serves until ctrl-c.
pub async fn serve(addr: SocketAddr, store: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
