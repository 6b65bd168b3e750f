//! HTTP API for the demo and the blind annotation study.

use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gendebunk_core::evaluation::CategorySet;
use gendebunk_core::pipeline::{DebunkRequest, PipelineError, Stage, StageError, Strategy};
use serde::Deserialize;
use serde_json::{json, Value};
use tracing::{info, warn};

use crate::config::Engine;
use crate::reports::{self, Format};
use crate::study::{Annotations, NewSession, RatingSubmission, StudyError};

pub const TOKEN_HEADER: &str = "x-api-token";

pub struct AppState {
    pub engine: Arc<Engine>,
    pub annotations: Mutex<Annotations>,
    pub categories: CategorySet,
    pub token: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl std::fmt::Display) -> Self {
        Self {
            status,
            body: json!({ "error": kind, "message": message.to_string() }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let (status, kind) = match &e {
            StudyError::UnknownSession(_) => (StatusCode::NOT_FOUND, "UnknownSession"),
            StudyError::UnknownItem(_) => (StatusCode::NOT_FOUND, "UnknownItem"),
            StudyError::WrongTask { .. } => (StatusCode::CONFLICT, "WrongTask"),
            StudyError::DuplicateRating { .. } => (StatusCode::CONFLICT, "DuplicateRating"),
            StudyError::RoleConflict(_) => (StatusCode::CONFLICT, "RoleConflict"),
            StudyError::NoStudyItems => (StatusCode::CONFLICT, "NoStudyItems"),
            StudyError::OutOfRange { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "OutOfRange"),
            StudyError::MissingScore(_) => (StatusCode::UNPROCESSABLE_ENTITY, "MissingScore"),
            StudyError::InvalidRequest(_) => (StatusCode::UNPROCESSABLE_ENTITY, "InvalidRequest"),
            StudyError::BlindItem(_) => (StatusCode::FORBIDDEN, "BlindItem"),
            StudyError::Store(_) | StudyError::Replay { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "StoreError")
            }
        };
        ApiError::new(status, kind, e)
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let status = match (&e.stage, &e.source) {
            (Stage::Input, _) => StatusCode::UNPROCESSABLE_ENTITY,
            (_, StageError::Gateway(_)) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self {
            status,
            body: json!({
                "error": "PipelineError",
                "strategy": e.strategy,
                "layer": e.layer,
                "stage": e.stage,
                "message": e.to_string(),
            }),
        }
    }
}

fn bad_json(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidRequest", e)
}

/// Parses a body leniently so malformed input gets this API's error shape.
fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(bad_json)
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/debunk", post(post_debunk))
        .route("/api/templates", get(get_templates))
        .route("/api/sessions", post(post_session))
        .route("/api/tasks/next", get(get_next_task))
        .route("/api/ratings", post(post_rating))
        .route("/api/agreement", get(get_agreement))
        .route("/api/scores", get(get_scores))
        .route("/api/provenance/{item}", get(get_provenance))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state)
}

async fn require_token(
    State(state): State<Shared>,
    headers: HeaderMap,
    req: Request,
    next: Next,
) -> Response {
    if let Some(expected) = &state.token {
        let given = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            return ApiError::new(
                StatusCode::UNAUTHORIZED,
                "Unauthorized",
                "missing or wrong API token",
            )
            .into_response();
        }
    }
    next.run(req).await
}

#[derive(Deserialize)]
struct DebunkBody {
    myth: String,
    strategy: String,
    #[serde(default)]
    run_seed: u64,
}

async fn post_debunk(
    State(state): State<Shared>,
    body: axum::body::Bytes,
) -> Result<Response, ApiError> {
    let body: DebunkBody = parse_body(&body)?;
    let strategy: Strategy = body.strategy.parse().map_err(bad_json)?;
    let req = DebunkRequest {
        myth: body.myth,
        strategy,
        run_seed: body.run_seed,
    };
    let engine = state.engine.clone();
    let result = tokio::task::spawn_blocking(move || engine.debunk(&req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e))??;
    let id = state
        .annotations
        .lock()
        .expect("store lock")
        .add_result(result.clone(), false)?;
    Ok(([("x-item-id", id)], Json(result)).into_response())
}

async fn get_templates(State(state): State<Shared>) -> Json<Value> {
    Json(json!({ "templates": state.engine.templates().list() }))
}

async fn post_session(
    State(state): State<Shared>,
    body: axum::body::Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: NewSession = parse_body(&body)?;
    let summary = state
        .annotations
        .lock()
        .expect("store lock")
        .create_session(&req)?;
    info!(session = %summary.session_id, annotator = %summary.annotator.id, "session ready");
    Ok(Json(
        serde_json::to_value(summary).expect("summary serializes"),
    ))
}

#[derive(Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn get_next_task(
    State(state): State<Shared>,
    Query(q): Query<SessionQuery>,
) -> Result<Json<Value>, ApiError> {
    let session = q
        .session
        .ok_or_else(|| bad_json("missing session parameter"))?;
    let task = state
        .annotations
        .lock()
        .expect("store lock")
        .study()
        .next_task(&session)?;
    Ok(Json(serde_json::to_value(task).expect("task serializes")))
}

async fn post_rating(
    State(state): State<Shared>,
    body: axum::body::Bytes,
) -> Result<Json<Value>, ApiError> {
    let sub: RatingSubmission = parse_body(&body)?;
    let accepted = state.annotations.lock().expect("store lock").submit(&sub)?;
    Ok(Json(
        serde_json::to_value(accepted).expect("ack serializes"),
    ))
}

#[derive(Deserialize)]
struct ReportQuery {
    format: Option<Format>,
}

fn report_response(text: String, format: Format) -> Response {
    let content_type = match format {
        Format::Text => "text/plain; charset=utf-8",
        Format::Json => "application/json",
    };
    ([(header::CONTENT_TYPE, content_type)], text).into_response()
}

async fn get_agreement(
    State(state): State<Shared>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let format = q.format.unwrap_or(Format::Json);
    let rows = state
        .annotations
        .lock()
        .expect("store lock")
        .study()
        .completed_ratings();
    let text = reports::agreement(&rows, state.categories, format).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "ReportError",
            format!("{e:#}"),
        )
    })?;
    Ok(report_response(text, format))
}

async fn get_scores(
    State(state): State<Shared>,
    Query(q): Query<ReportQuery>,
) -> Result<Response, ApiError> {
    let format = q.format.unwrap_or(Format::Json);
    let rows = state
        .annotations
        .lock()
        .expect("store lock")
        .study()
        .completed_ratings();
    let text = reports::scores(&rows, format).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "ReportError",
            format!("{e:#}"),
        )
    })?;
    Ok(report_response(text, format))
}

async fn get_provenance(
    State(state): State<Shared>,
    Path(item): Path<String>,
    Query(q): Query<SessionQuery>,
) -> Result<Json<Value>, ApiError> {
    let guard = state.annotations.lock().expect("store lock");
    let item = guard.study().provenance(&item, q.session.as_deref())?;
    Ok(Json(json!({
        "item": item.id,
        "myth": item.result.myth,
        "sandwich": item.result.sandwich,
        "structure": item.result.structure,
        "provenance": item.result.provenance,
    })))
}

/// Binds `addr`, announces the bound address on stdout and serves until
/// interrupted.
pub async fn serve(state: Shared, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    println!("listening on http://{local}");
    info!(%local, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            if let Err(e) = tokio::signal::ctrl_c().await {
                warn!("signal handler failed: {e}");
            }
        })
        .await?;
    Ok(())
}
