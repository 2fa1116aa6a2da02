//! Reading-assistance pipeline for menu cards seen through smart glasses:
//! keyframe selection over detections, OCR layout reconstruction, menu
//! parsing, preference retrieval and constraint-aware recommendation.

pub mod error;
pub mod eval;
pub mod frame_select;
pub mod geometry;
pub mod layout;
pub mod llm;
pub mod menu;
pub mod ocr;
pub mod pipeline;
pub mod prefs;
pub mod recommend;
pub mod text;

pub use error::{Error, Result};
pub use geometry::{BBox, ImageDims};
