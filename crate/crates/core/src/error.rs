use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("no detection labelled {label:?} reaches confidence {min_confidence}")]
    NoMenuDetected { label: String, min_confidence: f64 },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("schema violation in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("OCR engine failed (status {status:?}): {stderr}")]
    Engine { status: Option<i32>, stderr: String },

    #[error("OCR engine timed out after {0:?}")]
    EngineTimeout(Duration),

    #[error("no menu items could be parsed")]
    EmptyMenu,

    #[error("duplicate document id {0:?}")]
    DuplicateDoc(String),

    #[error("document {0:?} not found")]
    NotFound(String),

    #[error("no eligible menu items remain")]
    NoEligibleItems,

    #[error("unknown menu item id {0:?}")]
    UnknownItem(String),

    #[error("language model unavailable after {attempts} attempt(s): {message}")]
    LlmUnavailable { attempts: u32, message: String },

    #[error("language model rejected the request (HTTP {status}): {body}")]
    LlmRejected { status: u16, body: String },

    #[error("no ground truth for parsed menu {0:?}")]
    MissingTruth(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGeometry(_) => "INVALID_GEOMETRY",
            Error::NoMenuDetected { .. } => "NO_MENU_DETECTED",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Schema { .. } => "SCHEMA_ERROR",
            Error::Engine { .. } => "ENGINE_ERROR",
            Error::EngineTimeout(_) => "ENGINE_TIMEOUT",
            Error::EmptyMenu => "EMPTY_MENU",
            Error::DuplicateDoc(_) => "DUPLICATE_DOC",
            Error::NotFound(_) => "NOT_FOUND",
            Error::NoEligibleItems => "NO_ELIGIBLE_ITEMS",
            Error::UnknownItem(_) => "UNKNOWN_ITEM",
            Error::LlmUnavailable { .. } => "LLM_UNAVAILABLE",
            Error::LlmRejected { .. } => "LLM_REJECTED",
            Error::MissingTruth(_) => "MISSING_TRUTH",
            Error::Io(_) => "IO_ERROR",
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Maps a serde_json failure onto a byte offset within `input`.
    pub(crate) fn from_json(err: serde_json::Error, input: &[u8]) -> Self {
        use serde_json::error::Category;
        match err.classify() {
            Category::Data => Error::schema(data_error_field(&err), err.to_string()),
            _ => Error::Parse {
                offset: line_col_to_offset(input, err.line(), err.column()),
                message: err.to_string(),
            },
        }
    }
}

fn data_error_field(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    for marker in ["missing field `", "unknown field `", "field `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "document".to_string()
}

fn line_col_to_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut offset = 0;
    for (i, l) in input.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(input.len());
        }
        offset += l.len() + 1;
    }
    input.len()
}
