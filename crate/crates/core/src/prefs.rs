//! Personal preference documents: file importers, a BM25 index over them,
//! and the dietary constraints they imply.
//!
//! Supported sources, one file each inside a profile directory:
//!
//! | file               | shape                                                   |
//! |--------------------|---------------------------------------------------------|
//! | `transactions.csv` | header `date,merchant,amount,currency,category`         |
//! | `places.json`      | `[{"name": str, "note"?: str, "tags"?: [str]}]`         |
//! | `photos.json`      | `[{"caption": str, "labels": [str], "tags"?: [str]}]`   |
//! | `manual.json`      | `[{"id"?: str, "text": str, "tags": [str]}]`            |
//!
//! Tags are `key:value` strings with keys `allergen`, `likes`, `dislikes`
//! and `diet`.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::LazyLock;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Transactions,
    Photos,
    Places,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDoc {
    pub id: String,
    pub source: Source,
    pub text: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

/// Importer result: documents plus the number of rows skipped as unreadable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Imported {
    pub docs: Vec<PreferenceDoc>,
    pub skipped: usize,
}

const TXN_COLUMNS: [&str; 5] = ["date", "merchant", "amount", "currency", "category"];

pub fn import_transactions(csv_bytes: &[u8]) -> Result<Imported> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::schema("header", e.to_string()))?
        .clone();
    let mut col = BTreeMap::new();
    for name in TXN_COLUMNS {
        let pos = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::schema(name, "missing column"))?;
        col.insert(name, pos);
    }

    let mut out = Imported::default();
    for (row, record) in reader.records().enumerate() {
        let id = format!("txn-{}", row + 1);
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{id}: unreadable row: {e}");
                out.skipped += 1;
                continue;
            }
        };
        let field = |name: &str| record.get(col[name]).unwrap_or("");
        let date = match NaiveDate::parse_from_str(field("date"), "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                log::warn!("{id}: bad date {:?}, row skipped", field("date"));
                out.skipped += 1;
                continue;
            }
        };
        out.docs.push(PreferenceDoc {
            id,
            source: Source::Transactions,
            text: format!("{} {}", field("merchant"), field("category")),
            tags: BTreeSet::new(),
            timestamp: date.and_hms_opt(0, 0, 0).map(|t| t.and_utc()),
        });
    }
    Ok(out)
}

fn json_array(bytes: &[u8]) -> Result<Vec<serde_json::Value>> {
    let root: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
    match root {
        serde_json::Value::Array(a) => Ok(a),
        _ => Err(Error::schema("root", "expected a JSON array")),
    }
}

fn entries<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<Vec<T>> {
    json_array(bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            serde_json::from_value(v).map_err(|e| {
                let field = match Error::from_json(e, b"") {
                    Error::Schema { field, .. } => field,
                    _ => "entry".into(),
                };
                Error::schema(field, format!("entry {i} is malformed"))
            })
        })
        .collect()
}

#[derive(Deserialize)]
struct PlaceEntry {
    name: String,
    #[serde(default)]
    note: Option<String>,
    #[serde(default)]
    tags: BTreeSet<String>,
}

#[derive(Deserialize)]
struct PhotoEntry {
    caption: String,
    #[serde(default)]
    labels: Vec<String>,
    #[serde(default)]
    tags: BTreeSet<String>,
    #[serde(default)]
    taken_at: Option<DateTime<Utc>>,
}

#[derive(Deserialize)]
struct ManualEntry {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    tags: BTreeSet<String>,
}

fn join_words<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts
        .into_iter()
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn import_places(json_bytes: &[u8]) -> Result<Vec<PreferenceDoc>> {
    Ok(entries::<PlaceEntry>(json_bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| PreferenceDoc {
            id: format!("place-{}", i + 1),
            source: Source::Places,
            text: join_words([p.name.as_str(), p.note.as_deref().unwrap_or("")]),
            tags: p.tags,
            timestamp: None,
        })
        .collect())
}

pub fn import_photos_metadata(json_bytes: &[u8]) -> Result<Vec<PreferenceDoc>> {
    Ok(entries::<PhotoEntry>(json_bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, p)| PreferenceDoc {
            id: format!("photo-{}", i + 1),
            source: Source::Photos,
            text: join_words(std::iter::once(p.caption.as_str()).chain(p.labels.iter().map(String::as_str))),
            tags: p.tags,
            timestamp: p.taken_at,
        })
        .collect())
}

pub fn import_manual(json_bytes: &[u8]) -> Result<Vec<PreferenceDoc>> {
    Ok(entries::<ManualEntry>(json_bytes)?
        .into_iter()
        .enumerate()
        .map(|(i, m)| PreferenceDoc {
            id: m.id.unwrap_or_else(|| format!("manual-{}", i + 1)),
            source: Source::Manual,
            text: m.text,
            tags: m.tags,
            timestamp: None,
        })
        .collect())
}

/// Loads every recognised source file present in a profile directory.
pub fn load_profile_dir(dir: &Path) -> Result<Vec<PreferenceDoc>> {
    if !dir.is_dir() {
        return Err(Error::NotFound(dir.display().to_string()));
    }
    let mut docs = Vec::new();
    let read = |name: &str| -> Result<Option<Vec<u8>>> {
        let path = dir.join(name);
        if path.is_file() {
            Ok(Some(std::fs::read(path)?))
        } else {
            Ok(None)
        }
    };
    if let Some(b) = read("transactions.csv")? {
        docs.extend(import_transactions(&b)?.docs);
    }
    if let Some(b) = read("places.json")? {
        docs.extend(import_places(&b)?);
    }
    if let Some(b) = read("photos.json")? {
        docs.extend(import_photos_metadata(&b)?);
    }
    if let Some(b) = read("manual.json")? {
        docs.extend(import_manual(&b)?);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Immutable inverted index over preference documents.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PreferenceIndex {
    /// term → (doc id, term frequency), sorted by doc id
    pub postings: BTreeMap<String, Vec<(String, u32)>>,
    pub doc_len: BTreeMap<String, usize>,
    pub avg_len: f64,
    pub doc_count: usize,
    #[serde(skip)]
    pub params: Bm25Params,
}

pub fn index_docs(docs: &[PreferenceDoc]) -> Result<PreferenceIndex> {
    let mut seen = HashSet::new();
    let mut postings: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    let mut doc_len = BTreeMap::new();
    for doc in docs {
        if !seen.insert(doc.id.as_str()) {
            return Err(Error::DuplicateDoc(doc.id.clone()));
        }
        let terms = tokenize(&doc.text);
        doc_len.insert(doc.id.clone(), terms.len());
        for t in terms {
            *postings.entry(t).or_default().entry(doc.id.clone()).or_default() += 1;
        }
    }
    let total: usize = doc_len.values().sum();
    let avg_len = if doc_len.is_empty() {
        0.0
    } else {
        total as f64 / doc_len.len() as f64
    };
    Ok(PreferenceIndex {
        postings: postings
            .into_iter()
            .map(|(t, m)| (t, m.into_iter().collect()))
            .collect(),
        doc_count: doc_len.len(),
        doc_len,
        avg_len,
        params: Bm25Params::default(),
    })
}

impl PreferenceIndex {
    pub fn with_params(mut self, params: Bm25Params) -> Self {
        self.params = params;
        self
    }

    fn term_frequency(&self, term: &str, doc_id: &str) -> (usize, u32) {
        match self.postings.get(term) {
            None => (0, 0),
            Some(list) => {
                let tf = list
                    .binary_search_by(|(id, _)| id.as_str().cmp(doc_id))
                    .map_or(0, |i| list[i].1);
                (list.len(), tf)
            }
        }
    }

    pub fn idf(&self, df: usize) -> f64 {
        let n = self.doc_count as f64;
        let df = df as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }
}

/// BM25 score of one document; query terms are summed in the order given.
pub fn bm25_score(index: &PreferenceIndex, query_terms: &[String], doc_id: &str) -> Result<f64> {
    let len = *index
        .doc_len
        .get(doc_id)
        .ok_or_else(|| Error::NotFound(doc_id.to_string()))? as f64;
    let Bm25Params { k1, b } = index.params;
    let mut score = 0.0;
    for term in query_terms {
        let (df, tf) = index.term_frequency(term, doc_id);
        if tf == 0 {
            continue;
        }
        let tf = tf as f64;
        let norm = 1.0 - b + b * len / index.avg_len;
        score += index.idf(df) * (tf * (k1 + 1.0)) / (tf + k1 * norm);
    }
    Ok(score)
}

/// Top-`k` documents by score, ties broken by ascending id; zero scores dropped.
pub fn retrieve_topk(index: &PreferenceIndex, query_terms: &[String], k: usize) -> Vec<(String, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let candidates: BTreeSet<&str> = query_terms
        .iter()
        .filter_map(|t| index.postings.get(t))
        .flatten()
        .map(|(id, _)| id.as_str())
        .collect();
    let mut scored: Vec<(String, f64)> = candidates
        .into_iter()
        .map(|id| (id.to_string(), bm25_score(index, query_terms, id).expect("indexed doc")))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

type LanguageTerms = BTreeMap<String, Vec<String>>;

/// Term groups keyed by allergen, diet and food category, each listing
/// surface forms per language tag.
#[derive(Debug, Clone, Deserialize)]
pub struct Lexicon {
    pub allergens: BTreeMap<String, LanguageTerms>,
    pub diets: BTreeMap<String, LanguageTerms>,
    pub categories: BTreeMap<String, LanguageTerms>,
}

static BUNDLED: LazyLock<Lexicon> = LazyLock::new(|| {
    serde_json::from_str(include_str!("../data/lexicon.json")).expect("bundled lexicon is valid")
});

fn group_terms(groups: &BTreeMap<String, LanguageTerms>, key: &str) -> BTreeSet<String> {
    groups
        .get(key)
        .into_iter()
        .flat_map(|langs| langs.values().flatten())
        .flat_map(|t| tokenize(t))
        .collect()
}

impl Lexicon {
    pub fn bundled() -> &'static Lexicon {
        &BUNDLED
    }

    pub fn from_json(bytes: &[u8]) -> Result<Lexicon> {
        serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))
    }

    /// The allergen's own name plus every listed surface form.
    pub fn allergen_terms(&self, allergen: &str) -> BTreeSet<String> {
        let mut terms = group_terms(&self.allergens, allergen);
        terms.extend(tokenize(allergen));
        terms
    }

    pub fn diet_exclusions(&self, diet: &str) -> BTreeSet<String> {
        group_terms(&self.diets, diet)
    }

    /// Soft preference terms: the value itself, its category members, and
    /// allergen forms when the value names an allergen group.
    pub fn preference_terms(&self, value: &str) -> BTreeSet<String> {
        let mut terms = group_terms(&self.categories, value);
        terms.extend(group_terms(&self.allergens, value));
        terms.extend(tokenize(value));
        terms
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub hard_exclusions: BTreeSet<String>,
    pub soft_likes: BTreeSet<String>,
    pub soft_dislikes: BTreeSet<String>,
}

impl ConstraintSet {
    pub fn is_empty(&self) -> bool {
        self.hard_exclusions.is_empty() && self.soft_likes.is_empty() && self.soft_dislikes.is_empty()
    }

    /// Enforces disjointness: hard exclusions win over both soft sets, and a
    /// term both liked and disliked is dropped from each.
    fn settle(&mut self) {
        self.soft_likes.retain(|t| !self.hard_exclusions.contains(t));
        self.soft_dislikes.retain(|t| !self.hard_exclusions.contains(t));
        let both: BTreeSet<String> = self.soft_likes.intersection(&self.soft_dislikes).cloned().collect();
        self.soft_likes.retain(|t| !both.contains(t));
        self.soft_dislikes.retain(|t| !both.contains(t));
    }
}

pub fn extract_constraints(docs: &[PreferenceDoc]) -> ConstraintSet {
    extract_constraints_with(docs, Lexicon::bundled())
}

pub fn extract_constraints_with(docs: &[PreferenceDoc], lexicon: &Lexicon) -> ConstraintSet {
    let mut set = ConstraintSet::default();
    for doc in docs {
        for tag in &doc.tags {
            let Some((key, value)) = tag.split_once(':') else {
                log::warn!("{}: tag {tag:?} has no key, ignored", doc.id);
                continue;
            };
            let value = value.trim().to_lowercase();
            match key.trim() {
                "allergen" => set.hard_exclusions.extend(lexicon.allergen_terms(&value)),
                "diet" => set.hard_exclusions.extend(lexicon.diet_exclusions(&value)),
                "likes" => set.soft_likes.extend(lexicon.preference_terms(&value)),
                "dislikes" => set.soft_dislikes.extend(lexicon.preference_terms(&value)),
                other => log::warn!("{}: unknown tag key {other:?}, ignored", doc.id),
            }
        }
    }
    set.settle();
    set
}
