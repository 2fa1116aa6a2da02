//! Chat-completion client.
//!
//! Request body: `{"model": ..., "messages": [{"role": "system", ...}, {"role": "user", ...}]}`.
//! The reply text is `choices[0].message.content`. Timeouts, connection
//! failures, HTTP 5xx and 429 are retried with doubling backoff; any other
//! 4xx is final.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names the environment variable that in turn holds the API token.
pub const TOKEN_VAR_ENV: &str = "MENULENS_LLM_TOKEN_VAR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    /// Attempts beyond the first.
    pub retries: u32,
}

/// Anything that can turn a conversation into a reply.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; the token is never stored.
    pub token_env: Option<String>,
    #[serde(with = "secs")]
    pub timeout: Duration,
    pub max_retries: u32,
    /// First retry delay; each further retry doubles it.
    #[serde(with = "secs")]
    pub backoff: Duration,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let v = f64::deserialize(d)?;
        Duration::try_from_secs_f64(v).map_err(serde::de::Error::custom)
    }
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "gpt-4".into(),
            token_env: std::env::var(TOKEN_VAR_ENV).ok(),
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff: Duration::from_secs(1),
        }
    }
}

impl LlmClientConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        LlmClientConfig {
            endpoint: endpoint.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::schema("timeout", "must be positive"));
        }
        if self.endpoint.is_empty() {
            return Err(Error::schema("endpoint", "must not be empty"));
        }
        Ok(())
    }

    fn token(&self) -> Option<String> {
        self.token_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
            .filter(|t| !t.is_empty())
    }
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
}

#[derive(Deserialize)]
struct Response {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

enum Attempt {
    Retryable(String),
    Final(Error),
}

/// Blocking HTTP client; call it from a worker thread inside async code.
pub struct HttpChatClient {
    config: LlmClientConfig,
    http: reqwest::blocking::Client,
}

impl HttpChatClient {
    pub fn new(config: LlmClientConfig) -> Result<Self> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::LlmUnavailable { attempts: 0, message: e.to_string() })?;
        Ok(HttpChatClient { config, http })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    fn attempt(&self, messages: &[ChatMessage]) -> std::result::Result<String, Attempt> {
        let mut req = self.http.post(&self.config.endpoint).json(&Request {
            model: &self.config.model,
            messages,
        });
        if let Some(token) = self.config.token() {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(Attempt::Retryable(format!("HTTP {status}")));
        }
        let body = resp.text().map_err(|e| Attempt::Retryable(e.to_string()))?;
        if !status.is_success() {
            return Err(Attempt::Final(Error::LlmRejected {
                status: status.as_u16(),
                body: body.chars().take(200).collect(),
            }));
        }
        let parsed: Response = serde_json::from_str(&body).map_err(|e| {
            Attempt::Final(Error::LlmUnavailable {
                attempts: 1,
                message: format!("malformed completion body: {e}"),
            })
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                Attempt::Final(Error::LlmUnavailable {
                    attempts: 1,
                    message: "completion has no choices".into(),
                })
            })
    }
}

impl CompletionClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<Completion> {
        let mut retries = 0;
        loop {
            match self.attempt(messages) {
                Ok(text) => return Ok(Completion { text, retries }),
                Err(Attempt::Final(e)) => return Err(e),
                Err(Attempt::Retryable(msg)) => {
                    if retries >= self.config.max_retries {
                        return Err(Error::LlmUnavailable {
                            attempts: retries + 1,
                            message: msg,
                        });
                    }
                    let delay = self.config.backoff * 2u32.saturating_pow(retries);
                    log::warn!("completion attempt {} failed ({msg}); retrying in {delay:?}", retries + 1);
                    std::thread::sleep(delay);
                    retries += 1;
                }
            }
        }
    }
}

/// One-shot completion of `prompt` under `system`.
pub fn llm_complete(system: &str, prompt: &str, config: &LlmClientConfig) -> Result<Completion> {
    HttpChatClient::new(config.clone())?
        .complete(&[ChatMessage::system(system), ChatMessage::user(prompt)])
}
