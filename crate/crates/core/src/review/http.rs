//! JSON API for the review UI.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/queue?stage=&n=&annotator=` | lease up to `n` items |
//! | POST | `/api/decision` | [`DecisionRequest`] |
//! | POST | `/api/lease/renew` | `{"token": ...}` |
//! | GET | `/api/progress` | [`Progress`] |
//! | GET | `/api/mention/{id}` | full workflow record |
//! | GET | `/api/export` | TSV, finalized stores only |
//!
//! When an auth token is configured every `/api` route requires
//! `Authorization: Bearer <token>`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use super::{DecisionRequest, ReviewService, ServiceError, Stage};
use crate::workflow::WorkflowError;

pub const DEFAULT_QUEUE_SIZE: usize = 20;
pub const MAX_QUEUE_SIZE: usize = 500;

#[derive(Clone)]
struct AppState {
    service: Arc<ReviewService>,
    token: Option<Arc<str>>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownStage(_) => StatusCode::BAD_REQUEST,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Workflow(e) => match e {
                WorkflowError::UnknownMention(_) => StatusCode::NOT_FOUND,
                WorkflowError::Transition { .. } | WorkflowError::NotFinalized => {
                    StatusCode::CONFLICT
                }
                WorkflowError::Input(_) => StatusCode::UNPROCESSABLE_ENTITY,
                _ => StatusCode::INTERNAL_SERVER_ERROR,
            },
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Deserialize)]
struct QueueParams {
    stage: String,
    annotator: String,
    n: Option<usize>,
}

#[derive(Deserialize)]
struct RenewBody {
    token: String,
}

async fn queue(
    State(app): State<AppState>,
    Query(p): Query<QueueParams>,
) -> Result<Response, ServiceError> {
    let stage: Stage = p.stage.parse()?;
    let n = p.n.unwrap_or(DEFAULT_QUEUE_SIZE).min(MAX_QUEUE_SIZE);
    Ok(Json(app.service.get_queue(stage, &p.annotator, n)).into_response())
}

async fn decision(
    State(app): State<AppState>,
    Json(body): Json<DecisionRequest>,
) -> Result<Response, ServiceError> {
    Ok(Json(app.service.post_decision(&body)?).into_response())
}

async fn renew(
    State(app): State<AppState>,
    Json(body): Json<RenewBody>,
) -> Result<Response, ServiceError> {
    let expires_at = app.service.renew(&body.token)?;
    Ok(Json(json!({ "expires_at": expires_at })).into_response())
}

async fn progress(State(app): State<AppState>) -> Response {
    Json(app.service.get_progress()).into_response()
}

async fn mention(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ServiceError> {
    Ok(Json(app.service.get_mention(&id)?).into_response())
}

async fn export(State(app): State<AppState>) -> Result<Response, ServiceError> {
    let body = app.service.export_tsv()?;
    Ok((
        [(
            header::CONTENT_TYPE,
            "text/tab-separated-values; charset=utf-8",
        )],
        body,
    )
        .into_response())
}

async fn require_token(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|given| given == &**token);
        if !ok {
            return (
                StatusCode::UNAUTHORIZED,
                Json(json!({ "error": "missing or invalid bearer token" })),
            )
                .into_response();
        }
    }
    next.run(req).await
}

/// Builds the router. Static files, if any, are served for non-API paths.
pub fn router(
    service: Arc<ReviewService>,
    auth_token: Option<String>,
    static_dir: Option<PathBuf>,
) -> Router {
    let state = AppState {
        service,
        token: auth_token.map(Arc::from),
    };
    let api = Router::new()
        .route("/queue", get(queue))
        .route("/decision", post(decision))
        .route("/lease/renew", post(renew))
        .route("/progress", get(progress))
        .route("/mention/{id}", get(mention))
        .route("/export", get(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => app,
    }
}

/// Binds `addr` and serves until `shutdown` resolves.
pub async fn serve<F>(addr: SocketAddr, app: Router, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("review service listening on {}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}
