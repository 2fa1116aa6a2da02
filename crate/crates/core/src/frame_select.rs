//! Keyframe selection over per-frame object detections.
//!
//! A frame qualifies when it carries a detection of the target label at or
//! above the confidence floor. Among qualifying frames the one whose card
//! sits closest to the image center wins, since lens distortion grows
//! toward the periphery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageDims};

pub const DEFAULT_TARGET_LABEL: &str = "menu";
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u32,
    pub label: String,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    pub fn validate(&self, dims: Option<ImageDims>) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::schema("confidence", "must lie in [0, 1]"));
        }
        self.bbox.validate()?;
        if let Some(d) = dims {
            let frame = BBox::new(0.0, 0.0, d.width as f64, d.height as f64);
            if !frame.contains(&self.bbox) {
                return Err(Error::InvalidGeometry(format!(
                    "bbox of frame {} exceeds {}x{} image",
                    self.frame_index, d.width, d.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: u32,
    pub centrality: f64,
    pub confidence: f64,
}

/// Selection parameters; defaults pick `"menu"` detections at confidence ≥ 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectConfig {
    pub target_label: String,
    pub min_confidence: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            target_label: DEFAULT_TARGET_LABEL.to_string(),
            min_confidence: DEFAULT_MIN_CONFIDENCE,
        }
    }
}

/// Normalized distance of the box center from the image center.
///
/// Each axis offset is divided by the half-extent of the image on that
/// axis, so the result lies in `[0, √2]` for boxes inside the frame.
pub fn centrality(bbox: &BBox, dims: ImageDims) -> Result<f64> {
    bbox.validate()?;
    dims.validate()?;
    let half_w = dims.width as f64 / 2.0;
    let half_h = dims.height as f64 / 2.0;
    let (cx, cy) = bbox.center();
    let dx = (cx - half_w) / half_w;
    let dy = (cy - half_h) / half_h;
    Ok(dx.hypot(dy))
}

/// Per-frame scores for qualifying detections, ordered by frame index.
///
/// A frame with several qualifying detections keeps its most central one;
/// equally central duplicates keep the higher confidence.
pub fn score_frames(
    detections: &[Detection],
    dims: ImageDims,
    config: &SelectConfig,
) -> Result<Vec<FrameScore>> {
    let mut best: std::collections::BTreeMap<u32, FrameScore> = Default::default();
    for det in detections {
        if det.label != config.target_label || det.confidence < config.min_confidence {
            continue;
        }
        let score = FrameScore {
            frame_index: det.frame_index,
            centrality: centrality(&det.bbox, dims)?,
            confidence: det.confidence,
        };
        best.entry(det.frame_index)
            .and_modify(|cur| {
                if better(&score, cur) {
                    *cur = score;
                }
            })
            .or_insert(score);
    }
    Ok(best.into_values().collect())
}

fn better(a: &FrameScore, b: &FrameScore) -> bool {
    rank(a, b) == std::cmp::Ordering::Less
}

/// Total order used for selection: centrality ascending, then confidence
/// descending, then frame index ascending.
fn rank(a: &FrameScore, b: &FrameScore) -> std::cmp::Ordering {
    a.centrality
        .total_cmp(&b.centrality)
        .then(b.confidence.total_cmp(&a.confidence))
        .then(a.frame_index.cmp(&b.frame_index))
}

/// Picks the keyframe whose target detection is most central.
pub fn select_keyframe(
    detections: &[Detection],
    dims: ImageDims,
    config: &SelectConfig,
) -> Result<u32> {
    if !(0.0..=1.0).contains(&config.min_confidence) {
        return Err(Error::schema("min_confidence", "must lie in [0, 1]"));
    }
    score_frames(detections, dims, config)?
        .iter()
        .min_by(|a, b| rank(a, b))
        .map(|s| s.frame_index)
        .ok_or_else(|| Error::NoMenuDetected {
            label: config.target_label.clone(),
            min_confidence: config.min_confidence,
        })
}

/// Wire format accepted by the CLI and service: either a bare detection array
/// or `{ "dims": {...}, "detections": [...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionSet {
    pub dims: ImageDims,
    pub detections: Vec<Detection>,
}

pub fn parse_detections(bytes: &[u8]) -> Result<Vec<Detection>> {
    serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))
}

pub fn parse_detection_set(bytes: &[u8]) -> Result<DetectionSet> {
    let set: DetectionSet = serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
    set.dims.validate()?;
    for d in &set.detections {
        d.validate(Some(set.dims))?;
    }
    Ok(set)
}
