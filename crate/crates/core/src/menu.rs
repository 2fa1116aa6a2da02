//! Menu grammar: price extraction, line classification and the fold from
//! reading-order lines into a [`DigitalMenu`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{ReadingOrderDocument, TextLine};
use crate::text::tokenize;

pub const SCHEMA_VERSION: u32 = 1;
pub const GENERAL_SECTION: &str = "GENERAL";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Price {
    pub amount_minor: u64,
    /// ISO-4217 code, or `UNKNOWN` when the line carries no currency marker.
    pub currency: String,
    pub raw: String,
}

static PRICE_RE: LazyLock<Regex> = LazyLock::new(|| {
    let marker = r"€|\$|£|zł|ZŁ|zl|[A-Z]{3}";
    Regex::new(&format!(
        r"(?:^|\s)(?P<raw>(?P<pre>{marker})?\s?(?P<int>\d{{1,6}})(?:[.,](?P<frac>\d{{2}}))?\s?(?P<post>{marker})?)\s*$"
    ))
    .expect("price pattern compiles")
});

// A two-decimal amount followed by a short word the marker list does not
// know, e.g. a misread "zł". Only consulted when PRICE_RE fails.
static LOOSE_PRICE_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:^|\s)(?P<raw>(?P<int>\d{1,6})[.,](?P<frac>\d{2})\s?[^\W\d_]{1,3})\s*$")
        .expect("loose price pattern compiles")
});

fn currency_code(marker: &str) -> String {
    match marker {
        "€" => "EUR".into(),
        "$" => "USD".into(),
        "£" => "GBP".into(),
        "zł" | "ZŁ" | "zl" => "PLN".into(),
        code => code.into(),
    }
}

/// Finds a price at the end of `text`.
///
/// Accepts an optional leading or trailing currency marker and either `.`
/// or `,` as decimal separator with exactly two decimals (or none). An
/// amount with two decimals followed by an unrecognised marker of up to three
/// letters is still a price, with currency `UNKNOWN`.
pub fn parse_price(text: &str) -> Option<Price> {
    split_price(text).map(|(_, p)| p)
}

/// Like [`parse_price`], also returning the text before the price.
pub fn split_price(text: &str) -> Option<(&str, Price)> {
    let Some(caps) = PRICE_RE.captures(text) else {
        let caps = LOOSE_PRICE_RE.captures(text)?;
        let start = caps.name("raw").expect("raw group always participates").start();
        let price = Price {
            amount_minor: caps["int"].parse::<u64>().ok()? * 100 + caps["frac"].parse::<u64>().ok()?,
            currency: "UNKNOWN".into(),
            raw: caps["raw"].to_string(),
        };
        return Some((&text[..start], price));
    };
    let start = caps.name("raw").expect("raw group always participates").start();
    let int: u64 = caps["int"].parse().ok()?;
    let frac: u64 = caps.name("frac").map_or(Some(0), |m| m.as_str().parse().ok())?;
    let currency = match (caps.name("pre"), caps.name("post")) {
        (Some(m), _) | (None, Some(m)) => currency_code(m.as_str()),
        (None, None) => "UNKNOWN".into(),
    };
    let price = Price {
        amount_minor: int * 100 + frac,
        currency,
        raw: caps["raw"].to_string(),
    };
    Some((&text[..start], price))
}

impl Price {
    /// Human rendering used in answers; keeps the menu's own notation.
    pub fn display(&self) -> &str {
        &self.raw
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineClass {
    SectionHeader,
    Item,
    Description,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrammarConfig {
    pub noise_confidence: f64,
    pub header_letter_ratio: f64,
    pub header_max_chars: usize,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        GrammarConfig {
            noise_confidence: 0.3,
            header_letter_ratio: 0.7,
            header_max_chars: 40,
        }
    }
}

fn looks_like_header(text: &str, config: &GrammarConfig) -> bool {
    let non_space: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if non_space.is_empty() || text.chars().count() > config.header_max_chars {
        return false;
    }
    let letters: Vec<char> = non_space.iter().copied().filter(|c| c.is_alphabetic()).collect();
    let ratio = letters.len() as f64 / non_space.len() as f64;
    ratio >= config.header_letter_ratio && letters.iter().all(|c| !c.is_lowercase())
}

/// Classifies a line given the class of the previous non-noise line.
///
/// Rules apply in a fixed order: low confidence is noise, a trailing price
/// makes an item, an all-caps short line is a header, a lowercase or
/// parenthesised continuation after an item is a description, and anything
/// else is a price-less item.
pub fn classify_line(line: &TextLine, prev: Option<LineClass>, config: &GrammarConfig) -> LineClass {
    if line.mean_confidence < config.noise_confidence {
        return LineClass::Noise;
    }
    let text = line.text();
    if parse_price(&text).is_some() {
        return LineClass::Item;
    }
    if looks_like_header(&text, config) {
        return LineClass::SectionHeader;
    }
    let continues = matches!(prev, Some(LineClass::Item | LineClass::Description));
    let trimmed = text.trim_start();
    let lower_start = trimmed
        .chars()
        .find(|c| c.is_alphabetic())
        .is_some_and(char::is_lowercase);
    if continues && (lower_start || trimmed.starts_with('(')) {
        return LineClass::Description;
    }
    LineClass::Item
}

/// Position of an item: section index and item index within it, rendered `"s.i"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemId {
    pub section: usize,
    pub item: usize,
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.section, self.item)
    }
}

impl FromStr for ItemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::UnknownItem(s.to_string());
        let (a, b) = s.split_once('.').ok_or_else(bad)?;
        Ok(ItemId {
            section: a.parse().map_err(|_| bad())?,
            item: b.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for ItemId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ItemId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuItem {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<Price>,
    #[serde(default)]
    pub source_lines: Vec<usize>,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

impl MenuItem {
    pub fn new(name: impl Into<String>) -> Self {
        let mut item = MenuItem {
            name: name.into(),
            description: None,
            price: None,
            source_lines: Vec::new(),
            tags: BTreeSet::new(),
        };
        item.refresh_tags();
        item
    }

    /// Recomputes tags from the name and description.
    pub fn refresh_tags(&mut self) {
        let mut text = self.name.clone();
        if let Some(d) = &self.description {
            text.push(' ');
            text.push_str(d);
        }
        self.tags = tokenize(&text).into_iter().collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuSection {
    pub title: String,
    #[serde(default)]
    pub items: Vec<MenuItem>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuringMethod {
    #[default]
    Grammar,
    Llm,
    GrammarFallback,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default)]
    pub keyframe_index: Option<u32>,
    #[serde(default)]
    pub image_ref: Option<String>,
    #[serde(default)]
    pub method: StructuringMethod,
    /// Set when an LLM was requested but the grammar produced the menu.
    #[serde(default)]
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitalMenu {
    pub schema_version: u32,
    pub sections: Vec<MenuSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language_hint: Option<String>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl DigitalMenu {
    pub fn items(&self) -> impl Iterator<Item = (ItemId, &MenuItem)> {
        self.sections.iter().enumerate().flat_map(|(s, sec)| {
            sec.items
                .iter()
                .enumerate()
                .map(move |(i, item)| (ItemId { section: s, item: i }, item))
        })
    }

    pub fn item(&self, id: ItemId) -> Option<&MenuItem> {
        self.sections.get(id.section)?.items.get(id.item)
    }

    pub fn item_count(&self) -> usize {
        self.sections.iter().map(|s| s.items.len()).sum()
    }
}

/// `"el"` when at least half the letters are Greek, otherwise unset.
pub fn detect_language(text: &str) -> Option<String> {
    let (mut letters, mut greek) = (0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphabetic()) {
        letters += 1;
        if ('\u{0370}'..='\u{03FF}').contains(&c) || ('\u{1F00}'..='\u{1FFF}').contains(&c) {
            greek += 1;
        }
    }
    (letters > 0 && greek * 2 >= letters).then(|| "el".to_string())
}

/// Per-line classification in reading order, threading the previous non-noise class.
pub fn classify_document(doc: &ReadingOrderDocument, config: &GrammarConfig) -> Vec<LineClass> {
    let mut prev = None;
    doc.lines
        .iter()
        .map(|line| {
            let class = classify_line(line, prev, config);
            if class != LineClass::Noise {
                prev = Some(class);
            }
            class
        })
        .collect()
}

/// Folds classified lines into sections and items.
pub fn build_menu(
    doc: &ReadingOrderDocument,
    provenance: Provenance,
    config: &GrammarConfig,
) -> Result<DigitalMenu> {
    let classes = classify_document(doc, config);
    let mut sections: Vec<MenuSection> = Vec::new();

    for (idx, (line, class)) in doc.lines.iter().zip(&classes).enumerate() {
        let text = line.text();
        match class {
            LineClass::Noise => {}
            LineClass::SectionHeader => sections.push(MenuSection {
                title: text.trim().to_string(),
                items: Vec::new(),
            }),
            LineClass::Item => {
                let (name, price) = match split_price(&text) {
                    Some((head, p)) => (head.trim().to_string(), Some(p)),
                    None => (text.trim().to_string(), None),
                };
                if name.is_empty() {
                    // a bare price on its own line belongs to the preceding item
                    if let Some(last) = last_item(&mut sections).filter(|i| i.price.is_none()) {
                        last.price = price;
                        last.source_lines.push(idx);
                    }
                    continue;
                }
                if sections.is_empty() {
                    sections.push(MenuSection {
                        title: GENERAL_SECTION.into(),
                        items: Vec::new(),
                    });
                }
                let mut item = MenuItem::new(name);
                item.price = price;
                item.source_lines.push(idx);
                sections.last_mut().expect("section exists").items.push(item);
            }
            LineClass::Description => {
                let Some(item) = last_item(&mut sections) else { continue };
                let desc = text.trim();
                item.description = Some(match item.description.take() {
                    Some(prev) => format!("{prev} {desc}"),
                    None => desc.to_string(),
                });
                item.source_lines.push(idx);
                item.refresh_tags();
            }
        }
    }

    let menu = DigitalMenu {
        schema_version: SCHEMA_VERSION,
        language_hint: detect_language(&crate::layout::lines_to_text(doc)),
        sections,
        provenance,
    };
    if menu.item_count() == 0 {
        return Err(Error::EmptyMenu);
    }
    Ok(menu)
}

fn last_item(sections: &mut [MenuSection]) -> Option<&mut MenuItem> {
    sections.last_mut()?.items.last_mut()
}

pub fn menu_to_json(menu: &DigitalMenu) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(menu).expect("menus always serialize");
    out.push(b'\n');
    out
}

pub fn menu_from_json(bytes: &[u8]) -> Result<DigitalMenu> {
    let menu: DigitalMenu =
        serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
    if menu.schema_version != SCHEMA_VERSION {
        return Err(Error::schema(
            "schema_version",
            format!("expected {SCHEMA_VERSION}, got {}", menu.schema_version),
        ));
    }
    Ok(menu)
}

pub fn menu_to_markdown(menu: &DigitalMenu) -> String {
    let mut blocks = Vec::with_capacity(menu.sections.len());
    for section in &menu.sections {
        let mut block = format!("## {}", section.title);
        for item in &section.items {
            block.push_str("\n- ");
            block.push_str(&item.name);
            if let Some(p) = &item.price {
                block.push_str(" — ");
                block.push_str(p.display());
            }
            if let Some(d) = &item.description {
                block.push_str("\n  ");
                block.push_str(d);
            }
        }
        blocks.push(block);
    }
    let mut out = blocks.join("\n\n");
    out.push('\n');
    out
}
