//! HTTP facade over the menu pipeline and the recommendation chat.
//!
//! Endpoints (all JSON):
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/v1/sessions` | 201 `{session_id, constraints}` |
//! | POST | `/v1/sessions/{id}/ingest` | 200 digital menu |
//! | POST | `/v1/sessions/{id}/chat` | 200 recommendation |
//! | POST | `/v1/sessions/{id}/feedback` | 200 recommendation |
//! | GET | `/v1/sessions/{id}/menu` | 200 digital menu |
//! | GET | `/healthz` | 200 `{status: "ok"}` |
//!
//! Errors carry `{code, message}`.

mod api;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use menulens_core::llm::{CompletionClient, LlmClientConfig};
use menulens_core::ocr::DEFAULT_OCR_TIMEOUT;
use menulens_core::pipeline::PipelineConfig;

pub use api::{router, ApiError};
pub use store::{SessionStore, Slot, StoreFull, DEFAULT_CAPACITY};

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Chat-completion endpoint; `None` runs fully offline.
    pub llm: Option<LlmClientConfig>,
    /// Directory of named preference profiles, one subdirectory each.
    pub profiles_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
    /// External OCR command template with an `{image}` placeholder.
    pub ocr_cmd: Option<String>,
    pub ocr_timeout: Duration,
    pub capacity: usize,
    pub pipeline: PipelineConfig,
    pub default_k: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            llm: None,
            profiles_dir: None,
            static_dir: None,
            ocr_cmd: None,
            ocr_timeout: DEFAULT_OCR_TIMEOUT,
            capacity: DEFAULT_CAPACITY,
            pipeline: PipelineConfig::default(),
            default_k: DEFAULT_K,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    pub config: Arc<ServiceConfig>,
    pub store: Arc<SessionStore>,
    client: Option<Arc<dyn CompletionClient>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Self {
        AppState {
            store: Arc::new(SessionStore::new(config.capacity)),
            config: Arc::new(config),
            client: None,
        }
    }

    /// Uses `client` for every model call instead of the configured endpoint.
    pub fn with_client(mut self, client: Arc<dyn CompletionClient>) -> Self {
        self.client = Some(client);
        self
    }

    /// Runs `f` with the model client, if any. Must be called off the async
    /// executor since the HTTP client blocks.
    fn with_llm<R>(&self, f: impl FnOnce(Option<&dyn CompletionClient>) -> R) -> R {
        if let Some(c) = &self.client {
            return f(Some(c.as_ref()));
        }
        match &self.config.llm {
            Some(cfg) => match menulens_core::llm::HttpChatClient::new(cfg.clone()) {
                Ok(client) => f(Some(&client)),
                Err(e) => {
                    log::warn!("model client unusable, continuing offline: {e}");
                    f(None)
                }
            },
            None => f(None),
        }
    }
}

pub async fn serve(addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    serve_on(tokio::net::TcpListener::bind(addr).await?, config).await
}

pub async fn serve_on(listener: tokio::net::TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(config))).await
}
