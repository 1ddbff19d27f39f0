use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use microspot_core::review::{
    DecisionRequest, ErrorBody, FeedbackRecord, ModelInfo, ModelVersion, Proposal, ProposalStatus,
    VideoSummary,
};
use microspot_core::Error;
use serde::Deserialize;

use crate::state::ServiceState;

type Shared = Arc<ServiceState>;

/// Core errors rendered as a JSON `{"error": ...}` body.
pub struct ApiError(pub Error);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError(e)
    }
}

pub fn status_for(error: &Error) -> StatusCode {
    match error {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Conflict(_) => StatusCode::CONFLICT,
        Error::Precondition(_) => StatusCode::PRECONDITION_FAILED,
        Error::Validation(_) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = status_for(&self.0);
        let mut error = self.0.to_string();
        let mut cause = std::error::Error::source(&self.0);
        while let Some(c) = cause {
            error = format!("{error}: {c}");
            cause = c.source();
        }
        if status.is_server_error() {
            tracing::error!(%error, "request failed");
        }
        (status, Json(ErrorBody { error })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(
    work: impl FnOnce() -> microspot_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(work)
        .await
        .map_err(|e| ApiError(Error::Consistency(format!("worker task failed: {e}"))))?
        .map_err(ApiError)
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/health", get(|| async { "ok" }))
        .route("/api/videos", get(list_videos))
        .route("/api/videos/{video_id}/proposals", get(list_proposals))
        .route("/api/videos/{video_id}/frames/{index}", get(frame))
        .route("/api/proposals/{proposal_id}/decision", post(decide))
        .route("/api/retrain", post(retrain))
        .route("/api/model", get(model))
        .with_state(state)
}

async fn list_videos(State(state): State<Shared>) -> Json<Vec<VideoSummary>> {
    Json(state.videos())
}

#[derive(Deserialize)]
struct ProposalFilter {
    status: Option<String>,
}

async fn list_proposals(
    State(state): State<Shared>,
    Path(video_id): Path<String>,
    Query(filter): Query<ProposalFilter>,
) -> ApiResult<Json<Vec<Proposal>>> {
    let status = filter
        .status
        .as_deref()
        .map(str::parse::<ProposalStatus>)
        .transpose()?;
    Ok(Json(state.proposals(&video_id, status)?))
}

async fn frame(
    State(state): State<Shared>,
    Path((video_id, index)): Path<(String, usize)>,
) -> ApiResult<Response> {
    let png = blocking(move || state.frame_png(&video_id, index)).await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn decide(
    State(state): State<Shared>,
    Path(proposal_id): Path<String>,
    Json(request): Json<DecisionRequest>,
) -> ApiResult<Json<FeedbackRecord>> {
    let record =
        blocking(move || state.decide(&proposal_id, request.decision, &request.annotator)).await?;
    Ok(Json(record))
}

async fn retrain(State(state): State<Shared>) -> ApiResult<Json<ModelVersion>> {
    Ok(Json(state.retrain().await?))
}

async fn model(State(state): State<Shared>) -> Json<ModelInfo> {
    Json(state.model_info())
}
