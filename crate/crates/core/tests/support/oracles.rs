//! Independent oracles and input generators shared by property tests and the
//! acceptance suite. Nothing here calls into the code under test except to
//! construct its input types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use menulens_core::frame_select::Detection;
use menulens_core::geometry::{BBox, ImageDims};
use menulens_core::menu::{DigitalMenu, MenuItem, MenuSection, Price, Provenance, SCHEMA_VERSION};
use menulens_core::ocr::OcrToken;
use rand::seq::IndexedRandom;
use rand::Rng;

// ---------------------------------------------------------------------------
// keyframe selection

pub fn random_detections<R: Rng>(rng: &mut R, dims: ImageDims, max_len: usize) -> Vec<Detection> {
    let n = rng.random_range(0..=max_len);
    let labels = ["menu", "menu", "menu", "plate", "person"];
    (0..n)
        .map(|_| {
            let w = rng.random_range(1..=dims.width) as f64;
            let h = rng.random_range(1..=dims.height) as f64;
            let x = rng.random_range(0.0..=(dims.width as f64 - w));
            let y = rng.random_range(0.0..=(dims.height as f64 - h));
            // coarse grids make exact centrality and confidence ties common
            let (x, y) = if rng.random_bool(0.5) { ((x / 50.0).floor() * 50.0, (y / 50.0).floor() * 50.0) } else { (x, y) };
            let (w, h) = if rng.random_bool(0.5) { (100.0, 100.0) } else { (w, h) };
            let x = x.min(dims.width as f64 - w);
            let y = y.min(dims.height as f64 - h);
            Detection {
                frame_index: rng.random_range(0..60),
                label: labels.choose(rng).unwrap().to_string(),
                confidence: (rng.random_range(0..=20) as f64) / 20.0,
                bbox: BBox::new(x, y, x + w, y + h),
            }
        })
        .collect()
}

/// Sorts every qualifying detection by (centrality, −confidence, frame) and takes the head.
pub fn keyframe_oracle(dets: &[Detection], dims: ImageDims, label: &str, min_conf: f64) -> Option<u32> {
    let (hw, hh) = (dims.width as f64 / 2.0, dims.height as f64 / 2.0);
    let mut cands: Vec<(f64, f64, u32)> = dets
        .iter()
        .filter(|d| d.label == label && d.confidence >= min_conf)
        .map(|d| {
            let cx = (d.bbox.x_min + d.bbox.x_max) / 2.0;
            let cy = (d.bbox.y_min + d.bbox.y_max) / 2.0;
            let c = (((cx - hw) / hw).powi(2) + ((cy - hh) / hh).powi(2)).sqrt();
            (c, d.confidence, d.frame_index)
        })
        .collect();
    cands.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap()
            .then(b.1.partial_cmp(&a.1).unwrap())
            .then(a.2.cmp(&b.2))
    });
    cands.first().map(|c| c.2)
}

// ---------------------------------------------------------------------------
// layout

/// A generated page whose correct reading order is known by construction.
pub struct GeneratedLayout {
    pub tokens: Vec<OcrToken>,
    /// Token texts per line in the correct reading order.
    pub expected: Vec<Vec<String>>,
    pub page_width: f64,
}

/// Columns sit at fixed, widely separated starts; rows are staggered per
/// column so no two lines overlap vertically.
pub fn random_layout<R: Rng>(rng: &mut R, n_tokens: usize) -> GeneratedLayout {
    let page_width = 1000.0;
    let n_cols = rng.random_range(1..=3usize);
    let col_x = [40.0, 380.0, 720.0];
    // (column, row) → token count
    let mut lines: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for _ in 0..n_tokens {
        let col = rng.random_range(0..n_cols);
        let row = rng.random_range(0..4usize);
        *lines.entry((col, row)).or_default() += 1;
    }
    let mut tokens = Vec::new();
    let mut expected = Vec::new();
    let mut counter = 0;
    for (&(col, row), &count) in &lines {
        let y = 100.0 + 120.0 * row as f64 + 30.0 * col as f64;
        let mut x = col_x[col] + rng.random_range(0.0..60.0);
        let mut texts = Vec::new();
        for _ in 0..count {
            let w = rng.random_range(10.0..60.0);
            let jitter = rng.random_range(-4.0..4.0);
            let h = rng.random_range(16.0..24.0);
            let text = format!("t{counter}");
            counter += 1;
            tokens.push(OcrToken::new(text.clone(), BBox::new(x, y + jitter, x + w, y + jitter + h), 0.9));
            texts.push(text);
            x += w + rng.random_range(2.0..20.0);
        }
        expected.push(texts);
    }
    GeneratedLayout { tokens, expected, page_width }
}

/// Heap's algorithm; calls `visit` once per permutation.
pub fn for_each_permutation<T: Clone>(items: &[T], mut visit: impl FnMut(&[T])) {
    let mut a = items.to_vec();
    let n = a.len();
    let mut c = vec![0usize; n];
    visit(&a);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            visit(&a);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// BM25

pub fn random_corpus<R: Rng>(rng: &mut R, max_docs: usize) -> Vec<(String, String)> {
    let vocab = ["octopus", "ramen", "sushi", "pizza", "taverna", "grill", "peanut", "vegan", "coffee", "wine", "salad", "ζεστό", "żurek"];
    let n = rng.random_range(0..=max_docs);
    (0..n)
        .map(|i| {
            let len = rng.random_range(0..12);
            let words: Vec<&str> = (0..len).map(|_| *vocab.choose(rng).unwrap()).collect();
            (format!("doc-{i:03}"), words.join(" "))
        })
        .collect()
}

pub fn random_query<R: Rng>(rng: &mut R) -> Vec<String> {
    let vocab = ["octopus", "ramen", "sushi", "pizza", "grill", "peanut", "wine", "tea", "żurek"];
    let len = rng.random_range(0..5);
    (0..len).map(|_| vocab.choose(rng).unwrap().to_string()).collect()
}

/// Textbook BM25 (k1 = 1.2, b = 0.75) over whitespace-split lowercase words.
pub fn bm25_oracle(corpus: &[(String, String)], query: &[String], k: usize) -> Vec<(String, f64)> {
    let docs: Vec<(String, Vec<String>)> = corpus
        .iter()
        .map(|(id, t)| (id.clone(), t.split_whitespace().map(|w| w.to_lowercase()).collect()))
        .collect();
    let n = docs.len() as f64;
    let avg = if docs.is_empty() { 0.0 } else { docs.iter().map(|d| d.1.len()).sum::<usize>() as f64 / n };
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .map(|(id, words)| {
            let mut s = 0.0;
            for q in query {
                let tf = words.iter().filter(|w| *w == q).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = docs.iter().filter(|d| d.1.contains(q)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                s += idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * words.len() as f64 / avg));
            }
            (id.clone(), s)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

// ---------------------------------------------------------------------------
// recommendation safety

pub const DISH_WORDS: [&str; 16] = [
    "peanut", "shrimps", "octopus", "cheese", "fried", "noodles", "salad", "γαρίδες", "arachidi", "orzeszki",
    "pie", "soup", "pork", "tofu", "walnut", "rice",
];

pub const TAG_POOL: [&str; 12] = [
    "allergen:peanut", "allergen:shrimp", "allergen:milk", "allergen:tree_nut", "likes:seafood", "likes:cheese",
    "dislikes:fried", "likes:rice", "dislikes:soup", "diet:vegetarian", "likes:peanut", "dislikes:pie",
];

pub fn random_menu<R: Rng>(rng: &mut R) -> DigitalMenu {
    let n_sections = rng.random_range(1..=3);
    let sections = (0..n_sections)
        .map(|s| {
            let n_items = rng.random_range(1..=5);
            let items = (0..n_items)
                .map(|_| {
                    let words: Vec<&str> = (0..rng.random_range(1..=3)).map(|_| *DISH_WORDS.choose(rng).unwrap()).collect();
                    let mut item = MenuItem::new(words.join(" "));
                    if rng.random_bool(0.3) {
                        item.description = Some(format!("with {}", DISH_WORDS.choose(rng).unwrap()));
                        item.refresh_tags();
                    }
                    if rng.random_bool(0.8) {
                        let amount = rng.random_range(1..40) * 50;
                        item.price = Some(Price { amount_minor: amount, currency: "EUR".into(), raw: format!("{}.{:02}", amount / 100, amount % 100) });
                    }
                    item.source_lines = vec![0];
                    item
                })
                .collect();
            MenuSection { title: format!("SECTION {s}"), items }
        })
        .collect();
    DigitalMenu { schema_version: SCHEMA_VERSION, sections, language_hint: None, provenance: Provenance::default() }
}

pub fn random_tags<R: Rng>(rng: &mut R) -> BTreeSet<String> {
    let n = rng.random_range(0..=4);
    (0..n).map(|_| TAG_POOL.choose(rng).unwrap().to_string()).collect()
}
