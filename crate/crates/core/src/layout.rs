//! Line grouping, column detection and reading order over OCR tokens.
//!
//! Layout never drops tokens: noise is left for the menu parser to classify.

use serde::{Deserialize, Serialize};

use crate::geometry::BBox;
use crate::ocr::OcrToken;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutConfig {
    /// Two tokens share a line when their vertical overlap is at least this
    /// fraction of the shorter token's height.
    pub line_overlap: f64,
    /// A gap between sorted line starts of at least this fraction of the
    /// page width opens a new column.
    pub column_gap: f64,
    pub max_columns: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            line_overlap: 0.5,
            column_gap: 0.15,
            max_columns: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextLine {
    pub tokens: Vec<OcrToken>,
    pub bbox: BBox,
    pub baseline_y: f64,
    pub mean_confidence: f64,
}

impl TextLine {
    pub fn from_tokens(mut tokens: Vec<OcrToken>) -> TextLine {
        assert!(!tokens.is_empty(), "a line needs at least one token");
        tokens.sort_by(token_order);
        let bbox = tokens
            .iter()
            .map(OcrToken::bbox)
            .reduce(|a, b| a.union(&b))
            .expect("non-empty");
        let mut centers: Vec<f64> = tokens.iter().map(|t| t.bbox().center().1).collect();
        centers.sort_by(f64::total_cmp);
        let mid = centers.len() / 2;
        let baseline_y = if centers.len() % 2 == 1 {
            centers[mid]
        } else {
            (centers[mid - 1] + centers[mid]) / 2.0
        };
        let mean_confidence =
            tokens.iter().map(|t| t.confidence).sum::<f64>() / tokens.len() as f64;
        TextLine {
            tokens,
            bbox,
            baseline_y,
            mean_confidence,
        }
    }

    pub fn text(&self) -> String {
        self.tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Total order on tokens within a line: left edge first, remaining keys only
/// break exact ties so the result does not depend on input order.
fn token_order(a: &OcrToken, b: &OcrToken) -> std::cmp::Ordering {
    let (ba, bb) = (a.bbox(), b.bbox());
    ba.x_min
        .total_cmp(&bb.x_min)
        .then(ba.y_min.total_cmp(&bb.y_min))
        .then(ba.x_max.total_cmp(&bb.x_max))
        .then(ba.y_max.total_cmp(&bb.y_max))
        .then_with(|| a.text.cmp(&b.text))
        .then(a.confidence.total_cmp(&b.confidence))
}

fn line_order(a: &TextLine, b: &TextLine) -> std::cmp::Ordering {
    a.baseline_y
        .total_cmp(&b.baseline_y)
        .then(a.bbox.x_min.total_cmp(&b.bbox.x_min))
        .then_with(|| {
            a.tokens
                .iter()
                .zip(&b.tokens)
                .map(|(x, y)| token_order(x, y))
                .find(|o| o.is_ne())
                .unwrap_or(a.tokens.len().cmp(&b.tokens.len()))
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingOrderDocument {
    pub lines: Vec<TextLine>,
    pub column_bounds: Vec<(f64, f64)>,
    pub column_of_line: Vec<usize>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups tokens into lines by transitive vertical overlap.
///
/// Lines come back ordered top to bottom (baseline, then left edge).
pub fn group_into_lines(tokens: &[OcrToken], config: &LayoutConfig) -> Vec<TextLine> {
    let boxes: Vec<BBox> = tokens.iter().map(OcrToken::bbox).collect();
    let mut parent: Vec<usize> = (0..tokens.len()).collect();
    for i in 0..boxes.len() {
        for j in i + 1..boxes.len() {
            let min_h = boxes[i].height().min(boxes[j].height());
            if boxes[i].vertical_overlap(&boxes[j]) >= config.line_overlap * min_h {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<OcrToken>> = Default::default();
    for (i, tok) in tokens.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(tok.clone());
    }
    let mut lines: Vec<TextLine> = groups.into_values().map(TextLine::from_tokens).collect();
    lines.sort_by(line_order);
    lines
}

/// Clusters line start positions into at most `max_columns` column spans.
///
/// Each span runs from its first line start up to the next span's start;
/// the last one extends to the page edge.
pub fn detect_columns(lines: &[TextLine], page_width: f64, config: &LayoutConfig) -> Vec<(f64, f64)> {
    assert!(page_width > 0.0, "page width must be positive");
    let mut starts: Vec<f64> = lines.iter().map(|l| l.bbox.x_min).collect();
    if starts.is_empty() {
        return vec![(0.0, page_width)];
    }
    starts.sort_by(f64::total_cmp);

    // clusters as (first start, last start)
    let mut clusters: Vec<(f64, f64)> = vec![(starts[0], starts[0])];
    for &x in &starts[1..] {
        let last = clusters.last_mut().expect("non-empty");
        if x - last.1 >= config.column_gap * page_width {
            clusters.push((x, x));
        } else {
            last.1 = x;
        }
    }
    while clusters.len() > config.max_columns.max(1) {
        let merge_at = (0..clusters.len() - 1)
            .min_by(|&a, &b| {
                let ga = clusters[a + 1].0 - clusters[a].1;
                let gb = clusters[b + 1].0 - clusters[b].1;
                ga.total_cmp(&gb)
            })
            .expect("at least two clusters");
        let next = clusters.remove(merge_at + 1);
        clusters[merge_at].1 = next.1;
    }

    clusters
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let end = clusters.get(i + 1).map_or(page_width.max(c.1), |n| n.0);
            (c.0, end)
        })
        .collect()
}

fn column_for(x: f64, bounds: &[(f64, f64)]) -> usize {
    if let Some(i) = bounds.iter().position(|&(s, e)| s <= x && x < e) {
        return i;
    }
    let last = bounds.len() - 1;
    if x >= bounds[last].0 {
        return last;
    }
    bounds
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a.0 - x).abs().min((a.1 - x).abs());
            let db = (b.0 - x).abs().min((b.1 - x).abs());
            da.total_cmp(&db)
        })
        .map_or(0, |(i, _)| i)
}

/// Orders lines column-major: each column top to bottom, columns left to right.
pub fn reading_order(lines: Vec<TextLine>, column_bounds: Vec<(f64, f64)>) -> ReadingOrderDocument {
    if lines.is_empty() {
        return ReadingOrderDocument {
            lines,
            column_bounds,
            column_of_line: Vec::new(),
        };
    }
    let mut keyed: Vec<(usize, TextLine)> = lines
        .into_iter()
        .map(|l| (column_for(l.bbox.x_min, &column_bounds), l))
        .collect();
    keyed.sort_by(|(ca, a), (cb, b)| ca.cmp(cb).then_with(|| line_order(a, b)));
    let (column_of_line, lines) = keyed.into_iter().unzip();
    ReadingOrderDocument {
        lines,
        column_bounds,
        column_of_line,
    }
}

/// Full layout pass: lines, columns, reading order.
pub fn analyze(tokens: &[OcrToken], page_width: f64, config: &LayoutConfig) -> ReadingOrderDocument {
    let lines = group_into_lines(tokens, config);
    let columns = detect_columns(&lines, page_width, config);
    reading_order(lines, columns)
}

pub fn lines_to_text(doc: &ReadingOrderDocument) -> String {
    doc.lines
        .iter()
        .map(TextLine::text)
        .collect::<Vec<_>>()
        .join("\n")
}
