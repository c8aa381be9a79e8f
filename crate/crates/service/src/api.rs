//! REST and WebSocket routes.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;
use trafficops_agent::suite::full_registry;

use crate::frames::EventFrame;
use crate::session::{ServiceError, Session, SessionManager};

#[derive(Clone)]
pub struct AppState {
    pub sessions: Arc<SessionManager>,
    pub token: Option<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownBotKind(_) | ServiceError::EmptyMessage => StatusCode::BAD_REQUEST,
            ServiceError::UnknownSession(_) | ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::SessionBusy(_) => StatusCode::CONFLICT,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(session_history).delete(delete_session))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/history", get(session_history))
        .route("/api/sessions/{id}/stream", get(stream))
        .route("/api/tools", get(list_tools))
        .route("/api/artifacts/{id}", get(get_artifact))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/api/health", get(|| async { Json(json!({ "status": "ok" })) }))
        .merge(api)
        .with_state(state)
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

/// Bearer header, or `?token=` for browser WebSocket clients.
async fn require_token(
    State(state): State<AppState>,
    Query(q): Query<TokenQuery>,
    headers: HeaderMap,
    req: Request,
    next: Next,
) -> Response {
    if let Some(expected) = &state.token {
        let bearer = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if bearer != Some(expected.as_str()) && q.token.as_deref() != Some(expected.as_str()) {
            return (StatusCode::UNAUTHORIZED, Json(json!({ "error": "missing or invalid bearer token" })))
                .into_response();
        }
    }
    next.run(req).await
}

#[derive(Deserialize)]
struct CreateBody {
    bot_kind: String,
}

async fn create_session(State(s): State<AppState>, Json(body): Json<CreateBody>) -> Result<Response, ServiceError> {
    let session = s.sessions.create(&body.bot_kind)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "session_id": session.id, "bot_kind": session.kind })),
    )
        .into_response())
}

async fn delete_session(State(s): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ServiceError> {
    s.sessions.delete(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<MessageBody>,
) -> Result<Response, ServiceError> {
    let turn = s.sessions.post(&id, &body.text)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({
            "session_id": id,
            "turn": turn,
            "stream": format!("/api/sessions/{id}/stream"),
        })),
    )
        .into_response())
}

async fn session_history(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    Ok(Json(s.sessions.get(&id)?.summary()).into_response())
}

#[derive(Deserialize)]
struct ToolsQuery {
    session: Option<String>,
}

async fn list_tools(State(s): State<AppState>, Query(q): Query<ToolsQuery>) -> Result<Response, ServiceError> {
    let tools = match q.session {
        Some(id) => s.sessions.tools(&id)?,
        None => full_registry().descriptors().into_iter().cloned().collect(),
    };
    Ok(Json(tools).into_response())
}

async fn get_artifact(State(s): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let (art, bytes) = s
        .sessions
        .artifacts()
        .read_bytes(&id)
        .map_err(|_| ServiceError::NotFound(id.clone()))?;
    Ok(([(header::CONTENT_TYPE, art.kind.media_type())], bytes).into_response())
}

async fn stream(
    State(s): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ServiceError> {
    let session = s.sessions.get(&id)?;
    Ok(ws.on_upgrade(move |socket| forward(socket, session)))
}

fn text(frame: &EventFrame) -> Message {
    Message::Text(serde_json::to_string(frame).expect("frame serializes").into())
}

/// Replays the buffered turn, then relays live frames until the client leaves.
async fn forward(mut socket: WebSocket, session: Arc<Session>) {
    let (buffered, mut rx) = session.subscribe();
    for f in &buffered {
        if socket.send(text(f)).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            frame = rx.recv() => match frame {
                Ok(f) => {
                    if socket.send(text(&f)).await.is_err() {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    let _ = socket.send(Message::Close(None)).await;
                    return;
                }
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}
