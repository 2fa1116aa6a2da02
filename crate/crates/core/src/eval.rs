//! Item recall of parsed menus against ground truth, using greedy one-to-one
//! fuzzy name matching.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::menu::DigitalMenu;
pub use crate::text::normalize_name;

pub const DEFAULT_THETA: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMenu {
    pub menu_id: String,
    pub language: String,
    pub items: Vec<String>,
}

impl GroundTruthMenu {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let truth: GroundTruthMenu =
            serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
        let mut seen = HashSet::new();
        for name in &truth.items {
            let norm = normalize_name(name);
            if norm.is_empty() {
                return Err(Error::schema("items", "item names must be non-empty"));
            }
            if !seen.insert(norm) {
                return Err(Error::schema("items", format!("duplicate item {name:?}")));
            }
        }
        Ok(truth)
    }
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(row[j + 1] + 1);
        }
    }
    row[b.len()]
}

/// `1 − d / max(|a|, |b|)`, and 1.0 for two empty strings.
pub fn similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub parsed: usize,
    pub truth: usize,
    pub similarity: f64,
}

/// Greedy one-to-one matching of parsed names onto truth names.
///
/// Candidate pairs at or above `theta` are taken in order of similarity
/// (descending), truth index, then parsed index; a pair is accepted when
/// neither side is already matched.
pub fn match_items(parsed: &[String], truth: &[String], theta: f64) -> Vec<MatchPair> {
    let parsed_n: Vec<String> = parsed.iter().map(|s| normalize_name(s)).collect();
    let truth_n: Vec<String> = truth.iter().map(|s| normalize_name(s)).collect();
    let mut candidates = Vec::new();
    for (t, tn) in truth_n.iter().enumerate() {
        for (p, pn) in parsed_n.iter().enumerate() {
            let s = similarity(pn, tn);
            if s >= theta {
                candidates.push(MatchPair { parsed: p, truth: t, similarity: s });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then(a.truth.cmp(&b.truth))
            .then(a.parsed.cmp(&b.parsed))
    });
    let mut used_p = vec![false; parsed.len()];
    let mut used_t = vec![false; truth.len()];
    let mut out = Vec::new();
    for c in candidates {
        if !used_p[c.parsed] && !used_t[c.truth] {
            used_p[c.parsed] = true;
            used_t[c.truth] = true;
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuRecall {
    pub matched: usize,
    pub total: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unmatched {
    pub menu_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub theta: f64,
    pub per_menu: BTreeMap<String, MenuRecall>,
    /// Σ matched / Σ total over all menus.
    pub aggregate_recall: f64,
    /// Unweighted mean of per-menu recall, for comparison.
    pub macro_recall: f64,
    pub unmatched: Vec<Unmatched>,
}

fn ratio(matched: usize, total: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        matched as f64 / total as f64
    }
}

/// Recall of parsed item names per menu id.
///
/// A truth menu with no parsed counterpart counts as fully missed.
pub fn recall_report(
    parsed: &BTreeMap<String, Vec<String>>,
    truth: &[GroundTruthMenu],
    theta: f64,
) -> Result<RecallReport> {
    let by_id: BTreeMap<&str, &GroundTruthMenu> = truth.iter().map(|t| (t.menu_id.as_str(), t)).collect();
    if let Some(id) = parsed.keys().find(|id| !by_id.contains_key(id.as_str())) {
        return Err(Error::MissingTruth(id.clone()));
    }
    let mut per_menu = BTreeMap::new();
    let mut unmatched = Vec::new();
    let (mut sum_matched, mut sum_total) = (0, 0);
    for (id, t) in &by_id {
        let names = parsed.get(*id).map(Vec::as_slice).unwrap_or(&[]);
        let pairs = match_items(names, &t.items, theta);
        let mut hit = vec![false; t.items.len()];
        for p in &pairs {
            hit[p.truth] = true;
        }
        unmatched.extend(t.items.iter().zip(&hit).filter(|(_, h)| !**h).map(|(name, _)| Unmatched {
            menu_id: id.to_string(),
            name: name.clone(),
        }));
        sum_matched += pairs.len();
        sum_total += t.items.len();
        per_menu.insert(
            id.to_string(),
            MenuRecall {
                matched: pairs.len(),
                total: t.items.len(),
                recall: ratio(pairs.len(), t.items.len()),
            },
        );
    }
    let macro_recall = if per_menu.is_empty() {
        1.0
    } else {
        per_menu.values().map(|m| m.recall).sum::<f64>() / per_menu.len() as f64
    };
    Ok(RecallReport {
        theta,
        per_menu,
        aggregate_recall: ratio(sum_matched, sum_total),
        macro_recall,
        unmatched,
    })
}

pub fn item_names(menu: &DigitalMenu) -> Vec<String> {
    menu.items().map(|(_, i)| i.name.clone()).collect()
}

/// Fixed-width table for terminals.
pub fn render_table(report: &RecallReport) -> String {
    let mut out = format!("{:<16} {:>7} {:>5} {:>7}\n", "menu", "matched", "total", "recall");
    for (id, m) in &report.per_menu {
        out.push_str(&format!("{:<16} {:>7} {:>5} {:>7.4}\n", id, m.matched, m.total, m.recall));
    }
    let matched: usize = report.per_menu.values().map(|m| m.matched).sum();
    let total: usize = report.per_menu.values().map(|m| m.total).sum();
    out.push_str(&format!("{:<16} {:>7} {:>5} {:>7.4}\n", "aggregate", matched, total, report.aggregate_recall));
    for u in &report.unmatched {
        out.push_str(&format!("missed  {}: {}\n", u.menu_id, u.name));
    }
    out
}
