//! HTTP endpoints and the per-session event stream.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{self, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use pinshape_core::service::ErrorKind;
use pinshape_core::{ButtonSpec, CardId, Event, Hub, ServiceError, SessionHandle, SessionId};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match self.0.kind() {
            ErrorKind::NotFound => (StatusCode::NOT_FOUND, "not-found"),
            ErrorKind::InvalidState => (StatusCode::CONFLICT, "invalid-state"),
            ErrorKind::BadRequest => (StatusCode::BAD_REQUEST, "bad-request"),
            ErrorKind::Pipeline => (StatusCode::UNPROCESSABLE_ENTITY, "pipeline"),
            ErrorKind::Internal => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let kind = match &self.0 {
            ServiceError::GenerationFailed { .. } => "generation-failed",
            _ => kind,
        };
        (status, Json(json!({ "error": self.0.to_string(), "kind": kind }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Deserialize)]
struct PromptBody {
    text: String,
}

#[derive(Deserialize)]
struct ParamBody {
    name: String,
    value: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ButtonBody {
    group_id: u32,
    pressed: bool,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RollbackBody {
    card_id: CardId,
}

pub fn router(hub: Arc<Hub>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/prompt", post(prompt))
        .route("/sessions/{id}/params", post(set_param))
        .route("/sessions/{id}/buttons", post(press_button))
        .route("/sessions/{id}/buttons/config", post(configure_button))
        .route("/sessions/{id}/artifacts/{index}/toggle", post(toggle))
        .route("/sessions/{id}/rollback", post(rollback))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/events", get(events))
        .with_state(hub)
}

fn session(hub: &Hub, id: SessionId) -> ApiResult<Arc<SessionHandle>> {
    Ok(hub.session(id)?)
}

async fn create_session(State(hub): State<Arc<Hub>>) -> ApiResult<impl IntoResponse> {
    let handle = hub.create_session()?;
    Ok((StatusCode::CREATED, Json(json!({ "sessionId": handle.id() }))))
}

async fn prompt(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<SessionId>,
    Json(body): Json<PromptBody>,
) -> ApiResult<impl IntoResponse> {
    let card = session(&hub, id)?.prompt(body.text).await?;
    Ok(Json(card))
}

async fn set_param(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<SessionId>,
    Json(body): Json<ParamBody>,
) -> ApiResult<StatusCode> {
    session(&hub, id)?.set_parameter(body.name, body.value).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn press_button(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<SessionId>,
    Json(body): Json<ButtonBody>,
) -> ApiResult<StatusCode> {
    session(&hub, id)?.press_button(body.group_id, body.pressed).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn configure_button(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<SessionId>,
    Json(spec): Json<ButtonSpec>,
) -> ApiResult<StatusCode> {
    session(&hub, id)?.configure_button(spec).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn toggle(
    State(hub): State<Arc<Hub>>,
    Path((id, index)): Path<(SessionId, usize)>,
) -> ApiResult<impl IntoResponse> {
    let enabled = session(&hub, id)?.toggle(index).await?;
    Ok(Json(json!({ "index": index, "enabled": enabled })))
}

async fn rollback(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<SessionId>,
    Json(body): Json<RollbackBody>,
) -> ApiResult<StatusCode> {
    session(&hub, id)?.rollback(body.card_id).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn history(State(hub): State<Arc<Hub>>, Path(id): Path<SessionId>) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&hub, id)?.snapshot().await?))
}

fn event_name(event: &Event) -> &'static str {
    match event {
        Event::Feedback(_) => "feedback",
        Event::Frame(_) => "frame",
        Event::Fault { .. } => "fault",
    }
}

async fn events(
    State(hub): State<Arc<Hub>>,
    Path(id): Path<SessionId>,
) -> ApiResult<Sse<impl Stream<Item = Result<sse::Event, Infallible>>>> {
    let rx = session(&hub, id)?.subscribe();
    // Slow clients skip frames rather than stall the session.
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(event) => {
                    let data = serde_json::to_string(&event).unwrap_or_default();
                    let sse = sse::Event::default().event(event_name(&event)).data(data);
                    return Some((Ok(sse), rx));
                }
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
