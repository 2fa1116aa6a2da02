//! Unicode-aware text normalization shared by retrieval, tagging and evaluation.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// NFKC-normalizes, lowercases, and splits on every non-alphanumeric character.
///
/// Diacritics survive (`"Żurek"` → `["żurek"]`); there is no stemming or
/// stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    let folded: String = text.nfkc().collect::<String>().to_lowercase();
    folded
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Accent- and punctuation-insensitive form used for fuzzy name matching.
pub fn normalize_name(s: &str) -> String {
    let stripped: String = s.nfkd().filter(|c| !is_combining_mark(*c)).collect();
    let lowered = stripped.to_lowercase();
    let kept: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}
