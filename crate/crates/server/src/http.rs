//! Axum routes over a shared [`Service`].

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tokio::net::TcpListener;

use trake_core::quest::RewriteRequest;
use trake_core::KeyframeId;

use crate::api::{ApiError, DanteRequest, ErrorCode, ExemplarRequest, OcrRequest, SemanticRequest};
use crate::service::Service;

type Shared = State<Arc<Service>>;

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(t)| t)
        .map_err(|rejection| ApiError::invalid(rejection.body_text()))
}

/// Runs `f` on the blocking pool; searches and remote rewrites are
/// CPU-bound or blocking.
async fn blocking<T, F>(svc: Arc<Service>, f: F) -> Result<Json<T>, ApiError>
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Service) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError::new(ErrorCode::Internal, e.to_string()))?
        .map(Json)
}

async fn semantic(State(svc): Shared, payload: Result<Json<SemanticRequest>, JsonRejection>) -> Response {
    match body(payload) {
        Ok(req) => blocking(svc, move |s| s.semantic(&req)).await.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn ocr(State(svc): Shared, payload: Result<Json<OcrRequest>, JsonRejection>) -> Response {
    match body(payload) {
        Ok(req) => blocking(svc, move |s| s.ocr(&req)).await.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn dante(State(svc): Shared, payload: Result<Json<DanteRequest>, JsonRejection>) -> Response {
    match body(payload) {
        Ok(req) => blocking(svc, move |s| s.dante(&req)).await.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn rewrite(State(svc): Shared, payload: Result<Json<RewriteRequest>, JsonRejection>) -> Response {
    match body(payload) {
        Ok(req) => blocking(svc, move |s| s.rewrite(&req)).await.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn exemplar(State(svc): Shared, payload: Result<Json<ExemplarRequest>, JsonRejection>) -> Response {
    match body(payload) {
        Ok(req) => blocking(svc, move |s| s.ingest_exemplar(&req)).await.into_response(),
        Err(e) => e.into_response(),
    }
}

async fn keyframe(State(svc): Shared, Path(raw): Path<String>) -> Response {
    match raw.parse::<u64>() {
        Ok(id) => svc.detail(KeyframeId(id)).map(Json).into_response(),
        Err(_) => ApiError::invalid(format!("keyframe id `{raw}` is not a non-negative integer")).into_response(),
    }
}

async fn videos(State(svc): Shared) -> Response {
    Json(svc.videos()).into_response()
}

async fn health(State(svc): Shared) -> Response {
    Json(svc.health()).into_response()
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::RouteNotFound, "no such route")
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/api/search/semantic", post(semantic))
        .route("/api/search/ocr", post(ocr))
        .route("/api/search/dante", post(dante))
        .route("/api/quest/rewrite", post(rewrite))
        .route("/api/quest/exemplar", post(exemplar))
        .route("/api/keyframes/{id}", get(keyframe))
        .route("/api/videos", get(videos))
        .route("/api/health", get(health))
        .fallback(not_found)
        .with_state(svc)
}

/// Serves until `shutdown` resolves.
pub async fn serve<S>(listener: TcpListener, svc: Arc<Service>, shutdown: S) -> std::io::Result<()>
where
    S: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown).await
}
