//! Optional TOML configuration.
//!
//! Looked up at `$MENULENS_CONFIG`, else `~/.menulens.toml`. Every key is
//! optional and command-line flags win over file values:
//!
//! ```toml
//! [llm]
//! endpoint = "http://127.0.0.1:8000/v1/chat/completions"
//! model = "gpt-4"
//! token_env = "OPENAI_API_KEY"   # name of the variable holding the token
//! timeout_secs = 60
//! max_retries = 2
//!
//! [ocr]
//! command = "my-ocr --json {image}"
//! timeout_secs = 60
//!
//! [serve]
//! addr = "127.0.0.1:8080"
//! static_dir = "webchat/dist"
//! profiles_dir = "profiles"
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use menulens_core::llm::LlmClientConfig;
use serde::Deserialize;

pub const CONFIG_ENV: &str = "MENULENS_CONFIG";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub llm: LlmSection,
    #[serde(default)]
    pub ocr: OcrSection,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub token_env: Option<String>,
    pub timeout_secs: Option<f64>,
    pub max_retries: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrSection {
    pub command: Option<String>,
    pub timeout_secs: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub addr: Option<String>,
    pub static_dir: Option<PathBuf>,
    pub profiles_dir: Option<PathBuf>,
}

impl Config {
    /// Reads the explicit path, else `$MENULENS_CONFIG`, else `~/.menulens.toml`
    /// when it exists. An explicitly named file must exist.
    pub fn load(explicit: Option<&Path>) -> Result<Config> {
        let named = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let path = match named {
            Some(p) => p,
            None => match std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".menulens.toml")) {
                Some(p) if p.is_file() => p,
                _ => return Ok(Config::default()),
            },
        };
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Model client settings, if an endpoint is known.
    pub fn llm_config(&self, endpoint_flag: Option<&str>) -> Option<LlmClientConfig> {
        let endpoint = endpoint_flag.map(str::to_string).or_else(|| self.llm.endpoint.clone())?;
        let mut cfg = LlmClientConfig::new(endpoint);
        if let Some(m) = &self.llm.model {
            cfg.model = m.clone();
        }
        if let Some(t) = &self.llm.token_env {
            cfg.token_env = Some(t.clone());
        }
        if let Some(secs) = self.llm.timeout_secs {
            cfg.timeout = Duration::from_secs_f64(secs.max(0.001));
        }
        if let Some(r) = self.llm.max_retries {
            cfg.max_retries = r;
        }
        Some(cfg)
    }
}
