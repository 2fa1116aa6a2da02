//! Stage wiring: keyframe → OCR document → layout → digital menu, with an
//! optional language-model structuring pass.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::frame_select::{select_keyframe, Detection, SelectConfig};
use crate::geometry::ImageDims;
use crate::layout::{analyze, lines_to_text, LayoutConfig, ReadingOrderDocument};
use crate::llm::{ChatMessage, CompletionClient};
use crate::menu::{
    build_menu, DigitalMenu, GrammarConfig, MenuItem, Provenance, StructuringMethod, SCHEMA_VERSION,
};
use crate::ocr::OcrDocument;

pub const STRUCTURE_INSTRUCTION: &str = "You convert noisy OCR text of a restaurant menu card into JSON. \
Reply with a single JSON object and nothing else, shaped as \
{\"schema_version\": 1, \"sections\": [{\"title\": string, \"items\": [{\"name\": string, \
\"description\": string or null, \"price\": {\"amount_minor\": integer, \"currency\": ISO-4217 code or \"UNKNOWN\", \
\"raw\": string} or null}]}]}. Keep item names in the menu's own language, fix obvious OCR misspellings, \
and put items that precede any heading in a section titled \"GENERAL\".";

#[derive(Debug, Clone, Default)]
pub struct PipelineConfig {
    pub select: SelectConfig,
    pub layout: LayoutConfig,
    pub grammar: GrammarConfig,
}

/// Lays out an OCR document's tokens.
pub fn layout_document(ocr: &OcrDocument, config: &LayoutConfig) -> ReadingOrderDocument {
    analyze(&ocr.tokens, ocr.dims.width as f64, config)
}

fn extract_json(reply: &str) -> &str {
    match (reply.find('{'), reply.rfind('}')) {
        (Some(a), Some(b)) if a < b => &reply[a..=b],
        _ => reply,
    }
}

/// Checks a model reply against the menu schema.
pub fn validate_llm_menu(reply: &str) -> std::result::Result<DigitalMenu, String> {
    let mut value: serde_json::Value =
        serde_json::from_str(extract_json(reply)).map_err(|e| format!("not valid JSON: {e}"))?;
    if let Some(obj) = value.as_object_mut() {
        obj.entry("schema_version").or_insert(SCHEMA_VERSION.into());
        obj.remove("provenance");
    }
    let mut menu: DigitalMenu =
        serde_json::from_value(value).map_err(|e| format!("does not match the menu schema: {e}"))?;
    if menu.schema_version != SCHEMA_VERSION {
        return Err(format!("schema_version must be {SCHEMA_VERSION}"));
    }
    if menu.item_count() == 0 {
        return Err("the menu has no items".into());
    }
    for section in &mut menu.sections {
        for item in &mut section.items {
            item.name = item.name.trim().to_string();
            if item.name.is_empty() {
                return Err("every item needs a non-empty name".into());
            }
            item.description = item.description.take().filter(|d| !d.trim().is_empty());
            MenuItem::refresh_tags(item);
        }
    }
    Ok(menu)
}

/// Structures a laid-out document through a language model.
///
/// An invalid reply gets one correction round; a second failure, or an
/// unreachable model, falls back to the grammar with `degraded` set.
pub fn llm_structure_menu(
    doc: &ReadingOrderDocument,
    provenance: Provenance,
    client: &dyn CompletionClient,
    grammar: &GrammarConfig,
) -> Result<DigitalMenu> {
    let raw_text = lines_to_text(doc);
    let mut messages = vec![
        ChatMessage::system(STRUCTURE_INSTRUCTION),
        ChatMessage::user(raw_text.clone()),
    ];
    for round in 0..2 {
        let reply = match client.complete(&messages) {
            Ok(c) => c.text,
            Err(e) => {
                log::warn!("menu structuring model unavailable: {e}");
                break;
            }
        };
        match validate_llm_menu(&reply) {
            Ok(mut menu) => {
                menu.language_hint = menu
                    .language_hint
                    .or_else(|| crate::menu::detect_language(&raw_text));
                menu.provenance = Provenance {
                    method: StructuringMethod::Llm,
                    degraded: false,
                    ..provenance
                };
                return Ok(menu);
            }
            Err(problem) if round == 0 => {
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(format!(
                    "That reply was rejected: {problem}. Respond again with only the JSON object."
                )));
            }
            Err(problem) => log::warn!("model menu rejected twice: {problem}"),
        }
    }
    build_menu(
        doc,
        Provenance {
            method: StructuringMethod::GrammarFallback,
            degraded: true,
            ..provenance
        },
        grammar,
    )
}

/// OCR document → menu, through the model when one is supplied.
pub fn digitize(
    ocr: &OcrDocument,
    keyframe_index: Option<u32>,
    client: Option<&dyn CompletionClient>,
    config: &PipelineConfig,
) -> Result<DigitalMenu> {
    let doc = layout_document(ocr, &config.layout);
    let provenance = Provenance {
        keyframe_index,
        image_ref: Some(ocr.image_ref.clone()),
        method: StructuringMethod::Grammar,
        degraded: false,
    };
    match client {
        Some(c) => llm_structure_menu(&doc, provenance, c, &config.grammar),
        None => build_menu(&doc, provenance, &config.grammar),
    }
}

/// Result of the full pipeline, keeping the chosen frame for reporting.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub keyframe_index: u32,
    pub menu: DigitalMenu,
}

/// Detections plus per-frame OCR documents → digital menu.
pub fn run_pipeline(
    detections: &[Detection],
    dims: ImageDims,
    ocr_documents: &BTreeMap<u32, OcrDocument>,
    client: Option<&dyn CompletionClient>,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let keyframe_index = select_keyframe(detections, dims, &config.select)?;
    let ocr = ocr_documents.get(&keyframe_index).ok_or_else(|| {
        Error::NotFound(format!("OCR document for keyframe {keyframe_index}"))
    })?;
    let menu = digitize(ocr, Some(keyframe_index), client, config)?;
    Ok(PipelineOutput {
        keyframe_index,
        menu,
    })
}
