use std::collections::BTreeMap;
use std::io::Write;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine;
use menulens_core::frame_select::parse_detection_set;
use menulens_core::menu::{menu_to_json, DigitalMenu, ItemId};
use menulens_core::ocr::{parse_ocr_document, run_external_ocr, OcrDocument};
use menulens_core::pipeline::{digitize, run_pipeline};
use menulens_core::prefs::{extract_constraints, index_docs, load_profile_dir};
use menulens_core::recommend::{chat, regenerate, ChatSession};
use menulens_core::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::store::{Slot, StoreFull};
use crate::AppState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status: status.as_u16(), code: code.into(), message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    fn session_not_found(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND", format!("no session {id:?}"))
    }

    fn no_menu() -> Self {
        ApiError::new(StatusCode::CONFLICT, "NO_MENU", "no menu has been ingested for this session")
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NoMenuDetected { .. } | Error::EmptyMenu | Error::NoEligibleItems => StatusCode::UNPROCESSABLE_ENTITY,
            Error::InvalidGeometry(_)
            | Error::Parse { .. }
            | Error::Schema { .. }
            | Error::UnknownItem(_)
            | Error::DuplicateDoc(_)
            | Error::MissingTruth(_) => StatusCode::BAD_REQUEST,
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Engine { .. } | Error::LlmRejected { .. } => StatusCode::BAD_GATEWAY,
            Error::EngineTimeout(_) => StatusCode::GATEWAY_TIMEOUT,
            Error::LlmUnavailable { .. } => StatusCode::SERVICE_UNAVAILABLE,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        json_response(status, serde_json::to_vec_pretty(&self).expect("serializable"))
    }
}

type ApiResult = Result<Response, ApiError>;

fn json_response(status: StatusCode, mut body: Vec<u8>) -> Response {
    if body.last() != Some(&b'\n') {
        body.push(b'\n');
    }
    (status, [(header::CONTENT_TYPE, "application/json; charset=utf-8")], body).into_response()
}

fn json_ok<T: Serialize>(status: StatusCode, value: &T) -> Response {
    json_response(status, serde_json::to_vec_pretty(value).expect("serializable"))
}

fn menu_response(menu: &DigitalMenu) -> Response {
    json_response(StatusCode::OK, menu_to_json(menu))
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", format!("malformed body: {e}")))
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> R + Send + 'static) -> Result<R, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))
}

pub fn router(state: AppState) -> Router {
    let static_dir = state.config.static_dir.clone();
    let app = Router::new()
        .route("/healthz", get(healthz))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/ingest", post(ingest))
        .route("/v1/sessions/{id}/chat", post(chat_turn))
        .route("/v1/sessions/{id}/feedback", post(feedback))
        .route("/v1/sessions/{id}/menu", get(get_menu))
        .with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn healthz() -> Response {
    json_ok(StatusCode::OK, &json!({"status": "ok"}))
}

#[derive(Deserialize, Default)]
struct CreateSession {
    #[serde(default)]
    preferences_profile: Option<String>,
}

fn valid_profile_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) { CreateSession::default() } else { parse_body(&body)? };
    let docs = match req.preferences_profile {
        None => Vec::new(),
        Some(name) => {
            let not_found = || ApiError::new(StatusCode::NOT_FOUND, "PROFILE_NOT_FOUND", format!("no preference profile {name:?}"));
            let dir = match &state.config.profiles_dir {
                Some(d) if valid_profile_name(&name) => d.join(&name),
                _ => return Err(not_found()),
            };
            match blocking(move || load_profile_dir(&dir)).await? {
                Ok(docs) => docs,
                Err(Error::NotFound(_)) => return Err(not_found()),
                Err(e) => return Err(e.into()),
            }
        }
    };
    index_docs(&docs)?;
    let constraints = extract_constraints(&docs);
    let id = state
        .store
        .insert(Slot { docs, chat: None })
        .map_err(|StoreFull| ApiError::new(StatusCode::INSUFFICIENT_STORAGE, "STORE_FULL", "session store is full"))?;
    log::info!("session {id} created");
    Ok(json_ok(StatusCode::CREATED, &json!({"session_id": id, "constraints": constraints})))
}

enum IngestRequest {
    Frames { detections: Value, dims: Value, ocr_documents: BTreeMap<u32, OcrDocument> },
    Image(Vec<u8>),
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> Result<&'a Value, ApiError> {
    obj.get(name).ok_or_else(|| ApiError::bad_request(format!("missing field `{name}`")))
}

fn parse_ingest(body: &[u8]) -> Result<IngestRequest, ApiError> {
    let root: Value = parse_body(body)?;
    let obj = root.as_object().ok_or_else(|| ApiError::bad_request("body must be a JSON object"))?;
    if let Some(image) = obj.get("image") {
        if obj.get("use_external_ocr") != Some(&Value::Bool(true)) {
            return Err(ApiError::bad_request("image ingest requires \"use_external_ocr\": true"));
        }
        let b64 = image.as_str().ok_or_else(|| ApiError::bad_request("`image` must be a base64 string"))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| ApiError::bad_request(format!("`image` is not valid base64: {e}")))?;
        return Ok(IngestRequest::Image(bytes));
    }
    let docs = field(obj, "ocr_documents")?
        .as_object()
        .ok_or_else(|| ApiError::bad_request("`ocr_documents` must map frame indices to OCR documents"))?;
    let mut ocr_documents = BTreeMap::new();
    for (key, doc) in docs {
        let frame: u32 = key.parse().map_err(|_| ApiError::bad_request(format!("OCR key {key:?} is not a frame index")))?;
        let bytes = serde_json::to_vec(doc).expect("re-encode");
        ocr_documents.insert(frame, parse_ocr_document(&bytes)?);
    }
    Ok(IngestRequest::Frames {
        detections: field(obj, "detections")?.clone(),
        dims: field(obj, "dims")?.clone(),
        ocr_documents,
    })
}

fn ingest_blocking(state: &AppState, req: IngestRequest) -> Result<DigitalMenu, ApiError> {
    let pipeline = &state.config.pipeline;
    match req {
        IngestRequest::Frames { detections, dims, ocr_documents } => {
            let set = serde_json::to_vec(&json!({"dims": dims, "detections": detections})).expect("re-encode");
            let set = parse_detection_set(&set)?;
            let out = state.with_llm(|llm| run_pipeline(&set.detections, set.dims, &ocr_documents, llm, pipeline));
            match out {
                Ok(o) => Ok(o.menu),
                Err(Error::NotFound(what)) => Err(ApiError::bad_request(format!("missing {what}"))),
                Err(e) => Err(e.into()),
            }
        }
        IngestRequest::Image(bytes) => {
            let cmd = state.config.ocr_cmd.clone().ok_or_else(|| {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "OCR_UNAVAILABLE", "no external OCR command is configured")
            })?;
            let mut file = tempfile::Builder::new().prefix("menulens-").suffix(".img").tempfile().map_err(Error::from)?;
            file.write_all(&bytes).map_err(Error::from)?;
            let ocr = run_external_ocr(file.path(), &cmd, state.config.ocr_timeout)?;
            Ok(state.with_llm(|llm| digitize(&ocr, None, llm, pipeline))?)
        }
    }
}

async fn ingest(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let slot = state.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let req = parse_ingest(&body)?;
    let mut guard = slot.lock_owned().await;
    let menu = blocking(move || -> Result<DigitalMenu, ApiError> {
        let menu = ingest_blocking(&state, req)?;
        guard.chat = Some(ChatSession::new(id, menu.clone(), guard.docs.clone())?);
        Ok(menu)
    })
    .await??;
    Ok(menu_response(&menu))
}

#[derive(Deserialize)]
struct ChatRequest {
    query: String,
    #[serde(default)]
    k: Option<usize>,
}

fn check_k(k: Option<usize>, default: usize) -> Result<usize, ApiError> {
    match k {
        Some(0) => Err(ApiError::bad_request("`k` must be at least 1")),
        Some(k) => Ok(k),
        None => Ok(default),
    }
}

async fn chat_turn(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let slot = state.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let req: ChatRequest = parse_body(&body)?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("`query` must not be empty"));
    }
    let k = check_k(req.k, state.config.default_k)?;
    let mut guard = slot.lock_owned().await;
    let rec = blocking(move || {
        let session = guard.chat.as_mut().ok_or_else(ApiError::no_menu)?;
        Ok::<_, ApiError>(state.with_llm(|llm| chat(session, req.query.trim(), k, llm))?)
    })
    .await??;
    Ok(json_ok(StatusCode::OK, &rec))
}

#[derive(Deserialize)]
struct FeedbackRequest {
    rejected_item_ids: Vec<String>,
    #[serde(default)]
    k: Option<usize>,
    /// Forget earlier rejections before applying these.
    #[serde(default)]
    clear_rejections: bool,
}

async fn feedback(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let slot = state.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let req: FeedbackRequest = parse_body(&body)?;
    let k = check_k(req.k, state.config.default_k)?;
    let mut guard = slot.lock_owned().await;
    let rec = blocking(move || {
        let session = guard.chat.as_mut().ok_or_else(ApiError::no_menu)?;
        let mut ids = Vec::new();
        for raw in &req.rejected_item_ids {
            match raw.parse::<ItemId>() {
                Ok(id) if session.menu.item(id).is_some() => ids.push(id),
                _ => return Err(Error::UnknownItem(raw.clone()).into()),
            }
        }
        if req.clear_rejections {
            session.rejected_items.clear();
        }
        Ok::<_, ApiError>(state.with_llm(|llm| regenerate(session, &ids, k, llm))?)
    })
    .await??;
    Ok(json_ok(StatusCode::OK, &rec))
}

async fn get_menu(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let slot = state.store.get(&id).ok_or_else(|| ApiError::session_not_found(&id))?;
    let guard = slot.lock().await;
    let session = guard.chat.as_ref().ok_or_else(ApiError::no_menu)?;
    Ok(menu_response(&session.menu))
}
