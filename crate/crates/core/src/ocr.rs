//! Canonical OCR token interchange format and the external-engine adapter.
//!
//! Engines plug in through a command that prints one canonical JSON
//! document on stdout:
//!
//! ```json
//! {"image_ref": "frame_0012.png", "dims": {"width": 1408, "height": 1408},
//!  "tokens": [{"text": "Greek", "quad": [[80,120],[190,120],[190,150],[80,150]], "confidence": 0.97}]}
//! ```

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use wait_timeout::ChildExt;

use crate::error::{Error, Result};
use crate::geometry::{BBox, ImageDims};

pub const OCR_CMD_ENV: &str = "MENULENS_OCR_CMD";
pub const IMAGE_PLACEHOLDER: &str = "{image}";
pub const DEFAULT_OCR_TIMEOUT: Duration = Duration::from_secs(60);

pub type Quad = [[f64; 2]; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrToken {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    /// Corner points clockwise from top-left.
    pub quad: Quad,
    pub confidence: f64,
}

impl OcrToken {
    pub fn new(text: impl Into<String>, bbox: BBox, confidence: f64) -> Self {
        OcrToken {
            id: None,
            text: text.into(),
            quad: [
                [bbox.x_min, bbox.y_min],
                [bbox.x_max, bbox.y_min],
                [bbox.x_max, bbox.y_max],
                [bbox.x_min, bbox.y_max],
            ],
            confidence,
        }
    }

    /// Envelope of the quad. Only valid tokens reach layout, so this cannot fail there.
    pub fn bbox(&self) -> BBox {
        envelope(&self.quad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrDocument {
    pub image_ref: String,
    pub dims: ImageDims,
    pub tokens: Vec<OcrToken>,
}

fn envelope(quad: &Quad) -> BBox {
    let mut b = BBox::new(quad[0][0], quad[0][1], quad[0][0], quad[0][1]);
    for [x, y] in &quad[1..] {
        b.x_min = b.x_min.min(*x);
        b.y_min = b.y_min.min(*y);
        b.x_max = b.x_max.max(*x);
        b.y_max = b.y_max.max(*y);
    }
    b
}

/// Axis-aligned envelope of a quadrilateral.
pub fn quad_to_bbox(quad: &Quad) -> Result<BBox> {
    let b = envelope(quad);
    b.validate()?;
    Ok(b)
}

/// Parses and validates a canonical OCR document.
///
/// Token text is NFC-normalized and quads are clamped into the image
/// envelope. Out-of-range confidences are rejected rather than clamped.
pub fn parse_ocr_document(bytes: &[u8]) -> Result<OcrDocument> {
    let mut doc: OcrDocument =
        serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
    doc.dims.validate()?;
    let (w, h) = (doc.dims.width as f64, doc.dims.height as f64);
    let mut ids = HashSet::new();
    for (i, tok) in doc.tokens.iter_mut().enumerate() {
        if let Some(id) = &tok.id {
            if !ids.insert(id.clone()) {
                return Err(Error::schema("id", format!("duplicate token id {id:?}")));
            }
        }
        if !(0.0..=1.0).contains(&tok.confidence) {
            return Err(Error::schema(
                "confidence",
                format!("token {i} has confidence {} outside [0, 1]", tok.confidence),
            ));
        }
        tok.text = tok.text.nfc().collect();
        if tok.text.trim().is_empty() {
            return Err(Error::schema("text", format!("token {i} is blank")));
        }
        for p in tok.quad.iter_mut() {
            p[0] = p[0].clamp(0.0, w);
            p[1] = p[1].clamp(0.0, h);
        }
        quad_to_bbox(&tok.quad)
            .map_err(|_| Error::schema("quad", format!("token {i} has zero-area envelope")))?;
    }
    Ok(doc)
}

pub fn serialize_ocr_document(doc: &OcrDocument) -> Vec<u8> {
    serde_json::to_vec_pretty(doc).expect("OCR documents always serialize")
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Runs an external OCR command and parses its stdout as a canonical document.
///
/// `{image}` in the template is replaced with the shell-quoted image path and
/// the result is executed with `sh -c`.
pub fn run_external_ocr(
    image_path: &Path,
    command_template: &str,
    timeout: Duration,
) -> Result<OcrDocument> {
    if !command_template.contains(IMAGE_PLACEHOLDER) {
        return Err(Error::schema(
            "ocr_cmd",
            format!("command template must contain {IMAGE_PLACEHOLDER}"),
        ));
    }
    let command = command_template.replace(
        IMAGE_PLACEHOLDER,
        &shell_quote(&image_path.to_string_lossy()),
    );
    log::debug!("running OCR command: {command}");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;

    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        stdout.read_to_end(&mut buf).map(|_| buf)
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        stderr.read_to_end(&mut buf).map(|_| buf)
    });

    let status = match child.wait_timeout(timeout)? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::EngineTimeout(timeout));
        }
    };
    let out = out_reader.join().expect("stdout reader")?;
    let err = err_reader.join().expect("stderr reader")?;
    if !status.success() {
        return Err(Error::Engine {
            status: status.code(),
            stderr: String::from_utf8_lossy(&err).trim().to_string(),
        });
    }
    match parse_ocr_document(&out) {
        Err(Error::Schema { field, message }) => Err(Error::Parse {
            offset: 0,
            message: format!("engine output violates schema at `{field}`: {message}"),
        }),
        other => other,
    }
}
