//! `/api/v1` routes.
//!
//! ```text
//! POST   /sessions                                 create {source?, settings?}
//! GET    /sessions                                 list records
//! GET    /sessions/{id}                            record
//! PUT    /sessions/{id}/source                     {source}
//! DELETE /sessions/{id}/source                     pause ingestion
//! POST   /sessions/{id}/calibration/start
//! POST   /sessions/{id}/calibration/resume
//! GET    /sessions/{id}/calibration
//! POST   /sessions/{id}/typing                     freeze the score
//! GET    /sessions/{id}/chats
//! POST   /sessions/{id}/chats                      {title?, folder?}
//! PATCH  /sessions/{id}/chats/{chat}               {title?, folder?}
//! DELETE /sessions/{id}/chats/{chat}
//! GET    /sessions/{id}/chats/{chat}/messages
//! POST   /sessions/{id}/chats/{chat}/messages      {text}
//! POST   /sessions/{id}/folders                    {name}
//! DELETE /sessions/{id}/folders/{name}
//! GET    /sessions/{id}/settings
//! PATCH  /sessions/{id}/settings                   {mood_mode?, debug_mode?, dark_mode?}
//! POST   /sessions/{id}/reset
//! GET    /sessions/{id}/export                     zip
//! POST   /sessions/{id}/import                     chats.json body
//! GET    /sessions/{id}/engagement/stream          server-sent events
//! GET    /sessions/{id}/engagement/latest
//! ```

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post, put};
use axum::{Json, Router};
use futures::{Stream, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio_stream::wrappers::BroadcastStream;

use crate::gateway::GatewayError;
use crate::session::{unix_ms, Session, SessionError};
use crate::store::{SessionRecord, SettingsPatch};
use crate::AppState;

pub struct ApiError(SessionError);

impl<E: Into<SessionError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        use neurochat_core::engine::EngineError;
        let (status, message) = match &self.0 {
            SessionError::NotFound(_) => (StatusCode::NOT_FOUND, self.0.to_string()),
            SessionError::Conflict(_) => (StatusCode::CONFLICT, self.0.to_string()),
            SessionError::BadRequest(_) | SessionError::Source(_) => {
                (StatusCode::BAD_REQUEST, self.0.to_string())
            }
            SessionError::Engine(EngineError::Quality(_))
            | SessionError::Engine(EngineError::InvalidState(_)) => {
                (StatusCode::CONFLICT, self.0.to_string())
            }
            SessionError::Engine(_) => (StatusCode::UNPROCESSABLE_ENTITY, self.0.to_string()),
            SessionError::Gateway(g) => {
                let safe = match g {
                    GatewayError::Transport(_) => "language model unreachable".to_string(),
                    GatewayError::Provider { status, message } => {
                        format!("language model returned {status}: {message}")
                    }
                    GatewayError::Malformed(_) => "language model response unreadable".to_string(),
                };
                (StatusCode::BAD_GATEWAY, safe)
            }
            SessionError::Io(_) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                "storage failure".to_string(),
            ),
        };
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        (status, Json(json!({ "error": message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn session(state: &AppState, id: &str) -> ApiResult<Arc<Session>> {
    state
        .session(id)
        .ok_or_else(|| SessionError::NotFound(format!("session {id}")).into())
}

pub fn router(state: AppState) -> Router {
    let s = "/api/v1/sessions/{id}";
    Router::new()
        .route("/api/v1/sessions", post(create_session).get(list_sessions))
        .route(s, get(get_session))
        .route(&format!("{s}/source"), put(set_source).delete(stop_source))
        .route(&format!("{s}/calibration/start"), post(start_calibration))
        .route(&format!("{s}/calibration/resume"), post(resume_calibration))
        .route(&format!("{s}/calibration"), get(calibration_status))
        .route(&format!("{s}/typing"), post(typing))
        .route(&format!("{s}/chats"), get(list_chats).post(create_chat))
        .route(
            &format!("{s}/chats/{{chat}}"),
            patch(update_chat).delete(delete_chat),
        )
        .route(
            &format!("{s}/chats/{{chat}}/messages"),
            get(get_messages).post(post_message),
        )
        .route(&format!("{s}/folders"), post(create_folder))
        .route(&format!("{s}/folders/{{name}}"), delete(delete_folder))
        .route(
            &format!("{s}/settings"),
            get(get_settings).patch(patch_settings),
        )
        .route(&format!("{s}/reset"), post(reset))
        .route(&format!("{s}/export"), get(export))
        .route(&format!("{s}/import"), post(import))
        .route(&format!("{s}/engagement/stream"), get(stream))
        .route(&format!("{s}/engagement/latest"), get(latest))
        .with_state(state)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    source: Option<String>,
    #[serde(default)]
    settings: SettingsPatch,
}

async fn create_session(
    State(state): State<AppState>,
    body: Option<Json<CreateSession>>,
) -> ApiResult<(StatusCode, Json<SessionRecord>)> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let mut record = SessionRecord::new(uuid::Uuid::new_v4().to_string(), unix_ms());
    record.settings.apply(&body.settings);
    let sess = state.add_session(record)?;
    if let Some(src) = body.source.or_else(|| state.default_source()) {
        sess.set_source(&src)?;
    }
    Ok((StatusCode::CREATED, Json(sess.snapshot())))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionRecord>> {
    Json(state.sessions().iter().map(|s| s.snapshot()).collect())
}

async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SessionRecord>> {
    Ok(Json(session(&state, &id)?.snapshot()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceBody {
    source: String,
}

async fn set_source(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<SourceBody>,
) -> ApiResult<Json<SessionRecord>> {
    let sess = session(&state, &id)?;
    sess.set_source(&body.source)?;
    Ok(Json(sess.snapshot()))
}

async fn stop_source(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    session(&state, &id)?.stop_source();
    Ok(StatusCode::NO_CONTENT)
}

async fn start_calibration(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.start_calibration()?))
}

async fn resume_calibration(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.resume_calibration()?))
}

async fn calibration_status(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.calibration_status()))
}

async fn typing(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.typing_started()?))
}

async fn list_chats(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.snapshot().history))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    title: Option<String>,
    folder: Option<String>,
}

async fn create_chat(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<ChatBody>>,
) -> ApiResult<impl IntoResponse> {
    let body = body.map(|Json(b)| b).unwrap_or_default();
    let chat = session(&state, &id)?.create_chat(body.title, body.folder)?;
    Ok((StatusCode::CREATED, Json(chat)))
}

async fn update_chat(
    State(state): State<AppState>,
    Path((id, chat_id)): Path<(String, String)>,
    Json(body): Json<ChatBody>,
) -> ApiResult<impl IntoResponse> {
    let chat = session(&state, &id)?.update(|r| {
        if let Some(f) = &body.folder {
            if !f.is_empty() && !r.history.folders.contains(f) {
                return Err(SessionError::NotFound(format!("folder {f:?}")));
            }
        }
        let chat = r
            .chat_mut(&chat_id)
            .ok_or_else(|| SessionError::NotFound(format!("chat {chat_id}")))?;
        if let Some(t) = body.title {
            chat.title = t;
        }
        if let Some(f) = body.folder {
            // an empty folder name moves the chat back to the top level
            chat.folder = (!f.is_empty()).then_some(f);
        }
        Ok(chat.clone())
    })?;
    Ok(Json(chat))
}

async fn delete_chat(
    State(state): State<AppState>,
    Path((id, chat_id)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    session(&state, &id)?.update(|r| {
        let before = r.history.chats.len();
        r.history.chats.retain(|c| c.id != chat_id);
        if r.history.chats.len() == before {
            return Err(SessionError::NotFound(format!("chat {chat_id}")));
        }
        Ok(())
    })?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_messages(
    State(state): State<AppState>,
    Path((id, chat_id)): Path<(String, String)>,
) -> ApiResult<impl IntoResponse> {
    let rec = session(&state, &id)?.snapshot();
    let chat = rec
        .chat(&chat_id)
        .ok_or_else(|| SessionError::NotFound(format!("chat {chat_id}")))?;
    Ok(Json(chat.turns.clone()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    text: String,
}

async fn post_message(
    State(state): State<AppState>,
    Path((id, chat_id)): Path<(String, String)>,
    Json(body): Json<MessageBody>,
) -> ApiResult<impl IntoResponse> {
    let sess = session(&state, &id)?;
    let exchange = sess
        .post_message(
            &chat_id,
            &body.text,
            state.gateway().as_ref(),
            state.config(),
        )
        .await?;
    Ok(Json(exchange))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FolderBody {
    name: String,
}

async fn create_folder(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<FolderBody>,
) -> ApiResult<impl IntoResponse> {
    let name = body.name.trim().to_string();
    if name.is_empty() {
        return Err(SessionError::BadRequest("folder name is empty".into()).into());
    }
    let folders = session(&state, &id)?.update(|r| {
        if r.history.folders.contains(&name) {
            return Err(SessionError::Conflict(format!("folder {name:?} exists")));
        }
        r.history.folders.push(name);
        Ok(r.history.folders.clone())
    })?;
    Ok((StatusCode::CREATED, Json(folders)))
}

/// Chats in a deleted folder move to the top level.
async fn delete_folder(
    State(state): State<AppState>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    session(&state, &id)?.update(|r| {
        let before = r.history.folders.len();
        r.history.folders.retain(|f| *f != name);
        if r.history.folders.len() == before {
            return Err(SessionError::NotFound(format!("folder {name:?}")));
        }
        for c in &mut r.history.chats {
            if c.folder.as_deref() == Some(name.as_str()) {
                c.folder = None;
            }
        }
        Ok(())
    })?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_settings(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.settings()))
}

async fn patch_settings(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(patch): Json<SettingsPatch>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.patch_settings(&patch)?))
}

async fn reset(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    let sess = session(&state, &id)?;
    sess.reset()?;
    Ok(Json(sess.snapshot()))
}

async fn export(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let sess = session(&state, &id)?;
    let bytes = sess.export_zip()?;
    let disposition = format!("attachment; filename=\"neurochat-{}.zip\"", sess.id);
    Ok((
        [
            (header::CONTENT_TYPE, "application/zip".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    )
        .into_response())
}

async fn import(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let sess = session(&state, &id)?;
    sess.import_history(&body)?;
    Ok(Json(sess.snapshot().history))
}

async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let rx = session(&state, &id)?.subscribe();
    let events = BroadcastStream::new(rx).filter_map(|item| async move {
        // a lagging subscriber skips what it missed
        let sample = item.ok()?;
        Some(Ok(Event::default()
            .event("engagement")
            .json_data(sample)
            .expect("sample serialises")))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

async fn latest(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<impl IntoResponse> {
    Ok(Json(session(&state, &id)?.latest()))
}
