//! HTTP contract cases for the service, runnable fully offline.
//!
//! Each case panics on violation. The service test target runs them one per
//! test; the acceptance target runs them all through [`run_all`].
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::future::Future;
use std::path::PathBuf;
use std::pin::Pin;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use menulens_core::llm::{ChatMessage, Completion, CompletionClient};
use menulens_core::menu::{menu_from_json, ItemId};
use menulens_core::prefs::load_profile_dir;
use menulens_core::recommend::{chat, regenerate, ChatSession, CANONICAL_QUERY};
use menulens_service::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub const MENU_IDS: [&str; 4] = ["menu_el", "menu_en", "menu_it", "menu_pl"];

pub fn config() -> ServiceConfig {
    ServiceConfig { profiles_dir: Some(fixtures().join("profiles")), ..Default::default() }
}

pub fn app() -> Router {
    router(AppState::new(config()))
}

pub struct Reply {
    pub status: StatusCode,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("non-JSON body ({e}): {}", self.text()))
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    pub fn expect(self, status: StatusCode) -> Self {
        assert_eq!(self.status, status, "body: {}", self.text());
        self
    }

    /// Checks the status and the error body shape.
    pub fn expect_error(self, status: StatusCode, code: &str) -> Self {
        let s = self.expect(status);
        let body = s.json();
        assert_eq!(body["code"], code, "{body}");
        assert!(body["message"].as_str().is_some_and(|m| !m.is_empty()), "{body}");
        assert_eq!(body.as_object().unwrap().len(), 2, "{body}");
        s
    }
}

pub async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, body }
}

pub async fn post_json(app: &Router, uri: &str, body: &Value) -> Reply {
    call(app, "POST", uri, body.to_string()).await
}

pub async fn new_session(app: &Router, profile: Option<&str>) -> String {
    let body = match profile {
        Some(p) => json!({"preferences_profile": p}).to_string(),
        None => String::new(),
    };
    let r = call(app, "POST", "/v1/sessions", body).await.expect(StatusCode::CREATED);
    r.json()["session_id"].as_str().unwrap().to_string()
}

/// Ingest body assembled from a fixture menu directory.
pub fn ingest_body(menu_id: &str) -> Value {
    let dir = fixtures().join("menus").join(menu_id);
    let mut body: Value = serde_json::from_slice(&std::fs::read(dir.join("detections.json")).unwrap()).unwrap();
    let mut docs = serde_json::Map::new();
    for entry in std::fs::read_dir(dir.join("ocr")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let frame: u32 = name.trim_start_matches("frame_").trim_end_matches(".ocr.json").parse().unwrap();
        docs.insert(frame.to_string(), serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap());
    }
    body["ocr_documents"] = Value::Object(docs);
    body
}

pub fn golden(name: &str) -> Vec<u8> {
    std::fs::read(fixtures().join("golden").join(name)).unwrap()
}

pub async fn ingested(app: &Router, menu_id: &str, profile: Option<&str>) -> String {
    let id = new_session(app, profile).await;
    post_json(app, &format!("/v1/sessions/{id}/ingest"), &ingest_body(menu_id)).await.expect(StatusCode::OK);
    id
}

/// The same session built directly on the library, used as the oracle.
pub fn oracle_session(menu_id: &str, profile: &str) -> ChatSession {
    let menu = menu_from_json(&golden(&format!("{menu_id}.menu.json"))).unwrap();
    let docs = load_profile_dir(&fixtures().join("profiles").join(profile)).unwrap();
    ChatSession::new("oracle", menu, docs).unwrap()
}

fn pretty<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).unwrap();
    out.push(b'\n');
    out
}

/// Small hand-made OCR document, one token per line.
fn single_frame_body(lines: &[&str]) -> Value {
    let tokens: Vec<Value> = lines
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let (x0, y0) = (40.0, 100.0 + 60.0 * i as f64);
            let x1 = x0 + 14.0 * text.chars().count() as f64;
            json!({"text": text, "quad": [[x0, y0], [x1, y0], [x1, y0 + 28.0], [x0, y0 + 28.0]], "confidence": 0.95})
        })
        .collect();
    json!({
        "dims": {"width": 800, "height": 800},
        "detections": [{"frame_index": 0, "label": "menu", "confidence": 0.9, "bbox": [100, 100, 700, 700]}],
        "ocr_documents": {"0": {"image_ref": "hand/frame_0000.png", "dims": {"width": 800, "height": 800}, "tokens": tokens}}
    })
}

// ---- cases ----

pub async fn healthz() {
    let r = call(&app(), "GET", "/healthz", Body::empty()).await.expect(StatusCode::OK);
    assert_eq!(r.json(), json!({"status": "ok"}));
}

pub async fn create_session_empty_body() {
    let app = app();
    let r = call(&app, "POST", "/v1/sessions", Body::empty()).await.expect(StatusCode::CREATED);
    let id = r.json()["session_id"].as_str().unwrap().to_string();
    assert_eq!(id.len(), 22);
    assert!(id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_'), "{id}");
    let other = new_session(&app, None).await;
    assert_ne!(id, other);
}

pub async fn create_session_with_profile() {
    let r = post_json(&app(), "/v1/sessions", &json!({"preferences_profile": "alice"})).await.expect(StatusCode::CREATED);
    let c = &r.json()["constraints"];
    assert!(c["hard_exclusions"].as_array().unwrap().contains(&json!("peanut")));
    assert!(c["soft_likes"].as_array().unwrap().contains(&json!("octopus")));
}

pub async fn unknown_profile_is_404() {
    let app = app();
    for name in ["nobody", "../profiles/alice", ""] {
        post_json(&app, "/v1/sessions", &json!({"preferences_profile": name}))
            .await
            .expect_error(StatusCode::NOT_FOUND, "PROFILE_NOT_FOUND");
    }
    call(&app, "POST", "/v1/sessions", "{not json").await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
}

pub async fn store_full_when_all_active() {
    let state = AppState::new(ServiceConfig { capacity: 2, ..config() });
    let app = router(state.clone());
    let a = new_session(&app, None).await;
    let b = new_session(&app, None).await;
    let busy_a = state.store.get(&a).unwrap();
    let busy_b = state.store.get(&b).unwrap();
    call(&app, "POST", "/v1/sessions", Body::empty()).await.expect_error(StatusCode::INSUFFICIENT_STORAGE, "STORE_FULL");
    drop(busy_a);
    let c = new_session(&app, None).await;
    assert_eq!(state.store.len(), 2);
    call(&app, "GET", &format!("/v1/sessions/{a}/menu"), Body::empty()).await.expect_error(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND");
    call(&app, "GET", &format!("/v1/sessions/{c}/menu"), Body::empty()).await.expect(StatusCode::CONFLICT);
    drop(busy_b);
}

pub async fn ingest_fixtures_match_golden() {
    let app = app();
    for menu in MENU_IDS {
        let id = new_session(&app, None).await;
        let r = post_json(&app, &format!("/v1/sessions/{id}/ingest"), &ingest_body(menu)).await.expect(StatusCode::OK);
        assert!(r.body == golden(&format!("{menu}.menu.json")), "{menu}: {}", r.text());
        let m = call(&app, "GET", &format!("/v1/sessions/{id}/menu"), Body::empty()).await.expect(StatusCode::OK);
        assert_eq!(m.body, r.body, "{menu}: GET menu differs from ingest response");
    }
}

pub async fn ingest_low_confidence_is_422() {
    let app = app();
    let id = new_session(&app, None).await;
    let mut body = ingest_body("menu_en");
    for d in body["detections"].as_array_mut().unwrap() {
        d["confidence"] = json!(0.1);
    }
    post_json(&app, &format!("/v1/sessions/{id}/ingest"), &body)
        .await
        .expect_error(StatusCode::UNPROCESSABLE_ENTITY, "NO_MENU_DETECTED");
    let mut empty = ingest_body("menu_en");
    empty["detections"] = json!([]);
    post_json(&app, &format!("/v1/sessions/{id}/ingest"), &empty)
        .await
        .expect_error(StatusCode::UNPROCESSABLE_ENTITY, "NO_MENU_DETECTED");
}

pub async fn ingest_without_items_is_422() {
    let app = app();
    let id = new_session(&app, None).await;
    post_json(&app, &format!("/v1/sessions/{id}/ingest"), &single_frame_body(&["WELCOME", "OPEN DAILY"]))
        .await
        .expect_error(StatusCode::UNPROCESSABLE_ENTITY, "EMPTY_MENU");
}

pub async fn ingest_malformed_is_400() {
    let app = app();
    let id = new_session(&app, None).await;
    let uri = format!("/v1/sessions/{id}/ingest");
    call(&app, "POST", &uri, "not json").await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    call(&app, "POST", &uri, "[]").await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    let mut body = ingest_body("menu_en");
    body.as_object_mut().unwrap().remove("dims");
    post_json(&app, &uri, &body).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    let mut body = ingest_body("menu_en");
    body["detections"][0]["bbox"] = json!([10, 10, 5, 5]);
    assert_eq!(post_json(&app, &uri, &body).await.status, StatusCode::BAD_REQUEST);
    let mut body = ingest_body("menu_en");
    body["ocr_documents"]["10"]["tokens"][0]["confidence"] = json!(7);
    post_json(&app, &uri, &body).await.expect_error(StatusCode::BAD_REQUEST, "SCHEMA_ERROR");
    let mut body = ingest_body("menu_en");
    body["ocr_documents"] = json!({});
    post_json(&app, &uri, &body).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    // the session is still usable and has no menu
    call(&app, "GET", &format!("/v1/sessions/{id}/menu"), Body::empty()).await.expect_error(StatusCode::CONFLICT, "NO_MENU");
}

pub async fn unknown_session_is_404() {
    let app = app();
    let ghost = "AAAAAAAAAAAAAAAAAAAAAA";
    call(&app, "GET", &format!("/v1/sessions/{ghost}/menu"), Body::empty()).await.expect_error(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND");
    post_json(&app, &format!("/v1/sessions/{ghost}/ingest"), &ingest_body("menu_en")).await.expect_error(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND");
    post_json(&app, &format!("/v1/sessions/{ghost}/chat"), &json!({"query": "hi"})).await.expect_error(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND");
    post_json(&app, &format!("/v1/sessions/{ghost}/feedback"), &json!({"rejected_item_ids": []})).await.expect_error(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND");
}

pub async fn chat_before_ingest_is_409() {
    let app = app();
    let id = new_session(&app, Some("alice")).await;
    post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY})).await.expect_error(StatusCode::CONFLICT, "NO_MENU");
    post_json(&app, &format!("/v1/sessions/{id}/feedback"), &json!({"rejected_item_ids": []})).await.expect_error(StatusCode::CONFLICT, "NO_MENU");
}

pub async fn chat_canonical_golden() {
    let app = app();
    let id = ingested(&app, "menu_en", Some("alice")).await;
    let r = post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY})).await.expect(StatusCode::OK);
    assert!(r.body == golden("alice_menu_en.recommendation.json"), "{}", r.text());
    let mut oracle = oracle_session("menu_en", "alice");
    let expected = chat(&mut oracle, CANONICAL_QUERY, 3, None).unwrap();
    assert_eq!(r.body, pretty(&expected));
    // GET is read-only
    let again = post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY, "k": 3})).await.expect(StatusCode::OK);
    assert_eq!(again.json()["ranked"], r.json()["ranked"]);
}

pub async fn chat_bad_requests() {
    let app = app();
    let id = ingested(&app, "menu_en", None).await;
    let uri = format!("/v1/sessions/{id}/chat");
    post_json(&app, &uri, &json!({"query": "  "})).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    post_json(&app, &uri, &json!({"query": "hi", "k": 0})).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    post_json(&app, &uri, &json!({"k": 2})).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    let r = post_json(&app, &uri, &json!({"query": "hi", "k": 50})).await.expect(StatusCode::OK);
    assert_eq!(r.json()["ranked"].as_array().unwrap().len(), 9);
}

pub async fn chat_all_excluded_is_422() {
    let app = app();
    let id = new_session(&app, Some("alice")).await;
    let body = single_frame_body(&["Peanut Soup $5.00", "Groundnut Stew $7.00"]);
    post_json(&app, &format!("/v1/sessions/{id}/ingest"), &body).await.expect(StatusCode::OK);
    post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY}))
        .await
        .expect_error(StatusCode::UNPROCESSABLE_ENTITY, "NO_ELIGIBLE_ITEMS");
}

pub async fn feedback_reject_top() {
    let app = app();
    let id = ingested(&app, "menu_en", Some("alice")).await;
    let first = post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY})).await.expect(StatusCode::OK).json();
    let top = first["ranked"][0]["item_id"].as_str().unwrap().to_string();
    let second_id = first["ranked"][1]["item_id"].clone();
    let r = post_json(&app, &format!("/v1/sessions/{id}/feedback"), &json!({"rejected_item_ids": [top]})).await.expect(StatusCode::OK);
    assert_eq!(r.json()["ranked"][0]["item_id"], second_id);

    let mut oracle = oracle_session("menu_en", "alice");
    chat(&mut oracle, CANONICAL_QUERY, 3, None).unwrap();
    let expected = regenerate(&mut oracle, &[top.parse::<ItemId>().unwrap()], 3, None).unwrap();
    assert_eq!(r.body, pretty(&expected));
}

pub async fn feedback_reject_nothing_is_stable() {
    let app = app();
    let id = ingested(&app, "menu_en", Some("alice")).await;
    let first = post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY})).await.expect(StatusCode::OK);
    let again = post_json(&app, &format!("/v1/sessions/{id}/feedback"), &json!({"rejected_item_ids": []})).await.expect(StatusCode::OK);
    assert_eq!(first.body, again.body);
}

pub async fn feedback_unknown_item_is_400() {
    let app = app();
    let id = ingested(&app, "menu_en", Some("alice")).await;
    let uri = format!("/v1/sessions/{id}/feedback");
    for bad in ["9.9", "x", "0.99"] {
        post_json(&app, &uri, &json!({"rejected_item_ids": ["0.0", bad]})).await.expect_error(StatusCode::BAD_REQUEST, "UNKNOWN_ITEM");
    }
    // nothing was applied by the failed calls
    let r = post_json(&app, &uri, &json!({"rejected_item_ids": [], "k": 20})).await.expect(StatusCode::OK);
    assert!(r.json()["ranked"].as_array().unwrap().iter().any(|i| i["item_id"] == "0.0"));
    post_json(&app, &uri, &json!({"rejected_item_ids": "0.0"})).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
}

pub async fn feedback_reject_all_then_clear() {
    let app = app();
    let id = ingested(&app, "menu_en", Some("alice")).await;
    let uri = format!("/v1/sessions/{id}/feedback");
    let menu = call(&app, "GET", &format!("/v1/sessions/{id}/menu"), Body::empty()).await.json();
    let mut ids = Vec::new();
    for (s, sec) in menu["sections"].as_array().unwrap().iter().enumerate() {
        for i in 0..sec["items"].as_array().unwrap().len() {
            ids.push(format!("{s}.{i}"));
        }
    }
    post_json(&app, &uri, &json!({"rejected_item_ids": ids})).await.expect_error(StatusCode::UNPROCESSABLE_ENTITY, "NO_ELIGIBLE_ITEMS");
    post_json(&app, &uri, &json!({"rejected_item_ids": []})).await.expect_error(StatusCode::UNPROCESSABLE_ENTITY, "NO_ELIGIBLE_ITEMS");
    let r = post_json(&app, &uri, &json!({"rejected_item_ids": [], "clear_rejections": true})).await.expect(StatusCode::OK);
    assert_eq!(r.body, golden("alice_menu_en.recommendation.json"));
}

/// Records prompts and answers with fixed text, optionally slowly.
pub struct StubModel {
    pub prompts: Mutex<Vec<String>>,
    pub delay: Duration,
}

impl CompletionClient for StubModel {
    fn complete(&self, messages: &[ChatMessage]) -> menulens_core::Result<Completion> {
        let prompt = messages.last().unwrap().content.clone();
        std::thread::sleep(self.delay);
        self.prompts.lock().unwrap().push(prompt);
        Ok(Completion { text: "The octopus is a safe choice for you.".into(), retries: 0 })
    }
}

pub async fn chat_with_model_stub() {
    let stub = Arc::new(StubModel { prompts: Mutex::new(Vec::new()), delay: Duration::ZERO });
    let app = router(AppState::new(config()).with_client(stub.clone()));
    let id = ingested(&app, "menu_en", Some("alice")).await;
    let r = post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY})).await.expect(StatusCode::OK).json();
    assert_eq!(r["text"], "The octopus is a safe choice for you.");
    assert_eq!(r["degraded"], false);
    let offline: Value = serde_json::from_slice(&golden("alice_menu_en.recommendation.json")).unwrap();
    assert_eq!(r["ranked"], offline["ranked"]);
    // ingest consumed two prompts: the prose answer and its correction round
    let prompts = stub.prompts.lock().unwrap();
    assert_eq!(prompts.len(), 3);
    assert!(prompts[2].ends_with("[QUERY]\nWhat do you recommend from the menu?\n[/QUERY]"));
}

pub async fn unreachable_model_degrades() {
    let mut cfg = config();
    cfg.llm = Some(menulens_core::llm::LlmClientConfig {
        max_retries: 0,
        timeout: Duration::from_millis(500),
        ..menulens_core::llm::LlmClientConfig::new("http://127.0.0.1:9/v1/chat/completions")
    });
    let app = router(AppState::new(cfg));
    let id = ingested(&app, "menu_en", Some("alice")).await;
    let r = post_json(&app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY})).await.expect(StatusCode::OK);
    assert_eq!(r.body, golden("alice_menu_en.recommendation.json"));
    let menu = call(&app, "GET", &format!("/v1/sessions/{id}/menu"), Body::empty()).await.json();
    assert_eq!(menu["provenance"]["method"], "grammar_fallback");
    assert_eq!(menu["provenance"]["degraded"], true);
}

pub async fn same_session_requests_queue_in_order() {
    let stub = Arc::new(StubModel { prompts: Mutex::new(Vec::new()), delay: Duration::from_millis(150) });
    let app = router(AppState::new(config()).with_client(stub.clone()));
    let id = new_session(&app, Some("alice")).await;
    let body = ingest_body("menu_en");
    post_json(&app, &format!("/v1/sessions/{id}/ingest"), &body).await.expect(StatusCode::OK);
    let mut handles = Vec::new();
    for q in ["first question", "second question", "third question"] {
        let (app, uri) = (app.clone(), format!("/v1/sessions/{id}/chat"));
        handles.push(tokio::spawn(async move { post_json(&app, &uri, &json!({"query": q})).await.status }));
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::OK);
    }
    // ingest runs through the model too (answer plus correction round)
    let prompts = stub.prompts.lock().unwrap();
    assert_eq!(prompts.len(), 5);
    assert!(prompts[2].ends_with("[QUERY]\nfirst question\n[/QUERY]"));
    assert!(prompts[3].contains("[HISTORY]\nuser: first question\n"));
    assert!(prompts[4].contains("user: second question\n"));
    assert!(prompts[4].ends_with("[QUERY]\nthird question\n[/QUERY]"));
}

async fn transcript(app: &Router, id: &str, menu: &str) -> Vec<Vec<u8>> {
    let mut out = vec![post_json(app, &format!("/v1/sessions/{id}/ingest"), &ingest_body(menu)).await.body];
    let first = post_json(app, &format!("/v1/sessions/{id}/chat"), &json!({"query": CANONICAL_QUERY})).await;
    let top = first.json()["ranked"][0]["item_id"].clone();
    out.push(first.body);
    tokio::task::yield_now().await;
    out.push(post_json(app, &format!("/v1/sessions/{id}/feedback"), &json!({"rejected_item_ids": [top]})).await.body);
    out.push(post_json(app, &format!("/v1/sessions/{id}/chat"), &json!({"query": "anything light?", "k": 5})).await.body);
    out.push(call(app, "GET", &format!("/v1/sessions/{id}/menu"), Body::empty()).await.body);
    out
}

pub async fn sessions_do_not_interfere() {
    let app = app();
    let profiles = ["alice", "bob"];
    let mut serial = BTreeMap::new();
    for menu in MENU_IDS {
        for p in profiles {
            let id = new_session(&app, Some(p)).await;
            serial.insert((menu, p), transcript(&app, &id, menu).await);
        }
    }
    let mut handles = Vec::new();
    for round in 0..3 {
        for menu in MENU_IDS {
            for p in profiles {
                let app = app.clone();
                handles.push(tokio::spawn(async move {
                    let id = new_session(&app, Some(p)).await;
                    ((menu, p, round), transcript(&app, &id, menu).await)
                }));
            }
        }
    }
    for h in handles {
        let ((menu, p, _), t) = h.await.unwrap();
        assert!(t == serial[&(menu, p)], "{menu}/{p} transcript differs under concurrency");
    }
}

pub async fn image_ingest_via_external_ocr() {
    let fixture = fixtures().join("menus/menu_en/ocr/frame_0010.ocr.json");
    let mut cfg = config();
    cfg.ocr_cmd = Some(format!("test -s {{image}} && cat '{}'", fixture.display()));
    let app = router(AppState::new(cfg));
    let id = new_session(&app, None).await;
    let uri = format!("/v1/sessions/{id}/ingest");
    let body = json!({"image": "iVBORw0KGgo=", "use_external_ocr": true});
    let menu = post_json(&app, &uri, &body).await.expect(StatusCode::OK).json();
    let golden: Value = serde_json::from_slice(&golden("menu_en.menu.json")).unwrap();
    assert_eq!(menu["sections"], golden["sections"]);
    assert!(menu["provenance"]["keyframe_index"].is_null());

    post_json(&app, &uri, &json!({"image": "***", "use_external_ocr": true})).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    post_json(&app, &uri, &json!({"image": "iVBORw0KGgo="})).await.expect_error(StatusCode::BAD_REQUEST, "BAD_REQUEST");
    let plain = app_with_ocr(None);
    let id = new_session(&plain, None).await;
    post_json(&plain, &format!("/v1/sessions/{id}/ingest"), &body).await.expect_error(StatusCode::SERVICE_UNAVAILABLE, "OCR_UNAVAILABLE");
    let failing = app_with_ocr(Some("echo broken >&2; exit 3 # {image}"));
    let id = new_session(&failing, None).await;
    post_json(&failing, &format!("/v1/sessions/{id}/ingest"), &body).await.expect_error(StatusCode::BAD_GATEWAY, "ENGINE_ERROR");
}

fn app_with_ocr(cmd: Option<&str>) -> Router {
    router(AppState::new(ServiceConfig { ocr_cmd: cmd.map(str::to_string), ..config() }))
}

pub async fn static_assets_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>menu</title>").unwrap();
    let app = router(AppState::new(ServiceConfig { static_dir: Some(dir.path().to_path_buf()), ..config() }));
    let r = call(&app, "GET", "/", Body::empty()).await.expect(StatusCode::OK);
    assert!(r.text().contains("<title>menu</title>"));
    call(&app, "GET", "/healthz", Body::empty()).await.expect(StatusCode::OK);
    assert_eq!(call(&app, "GET", "/missing.js", Body::empty()).await.status, StatusCode::NOT_FOUND);
}

pub type Case = fn() -> Pin<Box<dyn Future<Output = ()> + Send>>;

macro_rules! cases {
    ($($name:ident),* $(,)?) => {
        pub fn cases() -> Vec<(&'static str, Case)> {
            vec![$((stringify!($name), (|| Box::pin($name())) as Case)),*]
        }
    };
}

cases!(
    healthz,
    create_session_empty_body,
    create_session_with_profile,
    unknown_profile_is_404,
    store_full_when_all_active,
    ingest_fixtures_match_golden,
    ingest_low_confidence_is_422,
    ingest_without_items_is_422,
    ingest_malformed_is_400,
    unknown_session_is_404,
    chat_before_ingest_is_409,
    chat_canonical_golden,
    chat_bad_requests,
    chat_all_excluded_is_422,
    feedback_reject_top,
    feedback_reject_nothing_is_stable,
    feedback_unknown_item_is_400,
    feedback_reject_all_then_clear,
    chat_with_model_stub,
    unreachable_model_degrades,
    same_session_requests_queue_in_order,
    sessions_do_not_interfere,
    image_ingest_via_external_ocr,
    static_assets_served,
);

/// Runs every case, isolating panics. Returns (name, Ok | failure message).
pub async fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    let mut out = Vec::new();
    for (name, case) in cases() {
        let res = tokio::spawn(case()).await.map_err(|e| match e.try_into_panic() {
            Ok(p) => p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()),
            Err(e) => e.to_string(),
        });
        out.push((name, res));
    }
    out
}
