//! Preference-aware recommendations over a digital menu.
//!
//! A chat turn retrieves the personal documents most related to the query,
//! ranks the menu deterministically under the session's constraints, and
//! lets a language model write the answer when one is configured. Without a
//! model the ranked list is rendered from a fixed template.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{ChatMessage, CompletionClient, Role};
use crate::menu::{menu_to_json, DigitalMenu, ItemId, MenuItem, Price};
use crate::prefs::{extract_constraints, index_docs, retrieve_topk, tokenize, ConstraintSet, PreferenceDoc, PreferenceIndex};

pub const CANONICAL_QUERY: &str = "What do you recommend from the menu?";

pub const SYSTEM_INSTRUCTION: &str = "You are a reading assistant for a person with low vision who is looking at a \
restaurant menu. Recommend dishes from the MENU block only, using the PREFERENCES block for personal context. \
Never suggest an item containing anything listed under CONSTRAINTS. Answer in the language of the QUERY, \
briefly, naming each dish and its price.";

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendConfig {
    pub k_docs: usize,
    pub history_window: usize,
    /// Maximum prompt length in characters.
    pub char_budget: usize,
}

impl Default for RecommendConfig {
    fn default() -> Self {
        RecommendConfig {
            k_docs: 5,
            history_window: 10,
            char_budget: 24_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct ChatSession {
    pub id: String,
    pub menu: DigitalMenu,
    pub constraints: ConstraintSet,
    pub docs: Vec<PreferenceDoc>,
    pub index: PreferenceIndex,
    pub history: Vec<Turn>,
    pub rejected_items: BTreeSet<ItemId>,
    pub config: RecommendConfig,
}

impl ChatSession {
    /// Builds a session, deriving constraints and the retrieval index from `docs`.
    pub fn new(id: impl Into<String>, menu: DigitalMenu, docs: Vec<PreferenceDoc>) -> Result<Self> {
        let index = index_docs(&docs)?;
        Ok(ChatSession {
            id: id.into(),
            constraints: extract_constraints(&docs),
            menu,
            docs,
            index,
            history: Vec::new(),
            rejected_items: BTreeSet::new(),
            config: RecommendConfig::default(),
        })
    }

    pub fn last_user_query(&self) -> Option<&str> {
        self.history
            .iter()
            .rev()
            .find(|t| t.role == Role::User)
            .map(|t| t.text.as_str())
    }

    fn doc(&self, id: &str) -> Option<&PreferenceDoc> {
        self.docs.iter().find(|d| d.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item_id: ItemId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<Price>,
    pub score: i64,
    /// Liked terms the item matched.
    pub rationale: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub ranked: Vec<RankedItem>,
    pub evidence: Vec<String>,
    pub text: String,
    pub degraded: bool,
}

fn excluded(item: &MenuItem, constraints: &ConstraintSet) -> bool {
    item.tags.iter().any(|t| constraints.hard_exclusions.contains(t))
}

/// Items whose tags avoid every hard exclusion.
pub fn filter_items(menu: &DigitalMenu, constraints: &ConstraintSet) -> Vec<ItemId> {
    menu.items()
        .filter(|(_, item)| !excluded(item, constraints))
        .map(|(id, _)| id)
        .collect()
}

/// Liked-term matches minus disliked-term matches.
pub fn score_item(item: &MenuItem, constraints: &ConstraintSet) -> i64 {
    let likes = item.tags.intersection(&constraints.soft_likes).count() as i64;
    let dislikes = item.tags.intersection(&constraints.soft_dislikes).count() as i64;
    likes - dislikes
}

/// Score descending, then cheaper first (unpriced last), then name, then id.
fn compare(a: &RankedItem, b: &RankedItem) -> Ordering {
    let price = match (&a.price, &b.price) {
        (Some(x), Some(y)) => x.amount_minor.cmp(&y.amount_minor),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    };
    b.score
        .cmp(&a.score)
        .then(price)
        .then_with(|| a.name.cmp(&b.name))
        .then(a.item_id.cmp(&b.item_id))
}

/// Every eligible item in recommendation order.
pub fn rank_items(session: &ChatSession) -> Vec<RankedItem> {
    let mut ranked: Vec<RankedItem> = filter_items(&session.menu, &session.constraints)
        .into_iter()
        .filter(|id| !session.rejected_items.contains(id))
        .map(|id| {
            let item = session.menu.item(id).expect("filtered ids exist");
            RankedItem {
                item_id: id,
                name: item.name.clone(),
                price: item.price.clone(),
                score: score_item(item, &session.constraints),
                rationale: item.tags.intersection(&session.constraints.soft_likes).cloned().collect(),
            }
        })
        .collect();
    ranked.sort_by(compare);
    ranked
}

fn render(ranked: &[RankedItem], excluded_count: usize) -> String {
    let mut lines = vec!["Here is what I would suggest from this menu:".to_string()];
    for (n, r) in ranked.iter().enumerate() {
        let price = r.price.as_ref().map_or("price not listed", Price::display);
        let mut line = format!("{}. {} ({price})", n + 1, r.name);
        if !r.rationale.is_empty() {
            line.push_str(&format!(" because you like {}", r.rationale.join(", ")));
        }
        lines.push(line);
    }
    if excluded_count > 0 {
        lines.push(format!(
            "I left out {excluded_count} item(s) that conflict with your dietary constraints."
        ));
    }
    lines.join("\n")
}

/// Deterministic answer: the top `k` eligible items rendered from a template.
pub fn fallback_recommend(session: &ChatSession, k: usize) -> Result<Recommendation> {
    let mut ranked = rank_items(session);
    if ranked.is_empty() {
        return Err(Error::NoEligibleItems);
    }
    ranked.truncate(k.max(1));
    let excluded_count = session.menu.item_count() - filter_items(&session.menu, &session.constraints).len();
    Ok(Recommendation {
        text: render(&ranked, excluded_count),
        ranked,
        evidence: Vec::new(),
        degraded: true,
    })
}

fn block(name: &str, body: &str) -> String {
    format!("[{name}]\n{body}\n[/{name}]")
}

/// Builds the model prompt from fixed, delimited blocks.
///
/// When the prompt exceeds the character budget, preference lines go first
/// (oldest timestamp first, undated before dated, less relevant before more
/// relevant on ties), then history turns
/// oldest first.
pub fn assemble_prompt(session: &ChatSession, retrieved: &[&PreferenceDoc], query: &str) -> String {
    let menu_json = String::from_utf8(menu_to_json(&session.menu)).expect("utf-8 JSON");
    let constraints: Vec<String> = session
        .constraints
        .hard_exclusions
        .iter()
        .map(|t| format!("- avoid: {t}"))
        .collect();
    let window = session.config.history_window;
    let mut history: Vec<String> = session.history[session.history.len().saturating_sub(window)..]
        .iter()
        .map(|t| {
            let who = if t.role == Role::User { "user" } else { "assistant" };
            format!("{who}: {}", t.text)
        })
        .collect();
    let mut prefs: Vec<(usize, &PreferenceDoc)> = retrieved.iter().copied().enumerate().collect();

    let build = |prefs: &[(usize, &PreferenceDoc)], history: &[String]| {
        let pref_lines: Vec<String> = prefs
            .iter()
            .map(|(_, d)| format!("- ({}) {}", d.id, d.text))
            .collect();
        [
            block("SYSTEM", SYSTEM_INSTRUCTION),
            block("MENU", menu_json.trim_end()),
            block("PREFERENCES", &pref_lines.join("\n")),
            block("CONSTRAINTS", &constraints.join("\n")),
            block("HISTORY", &history.join("\n")),
            block("QUERY", query),
        ]
        .join("\n")
    };

    let budget = session.config.char_budget;
    let mut prompt = build(&prefs, &history);
    while prompt.chars().count() > budget {
        if !prefs.is_empty() {
            let oldest = prefs
                .iter()
                .enumerate()
                .min_by(|(_, (ra, a)), (_, (rb, b))| a.timestamp.cmp(&b.timestamp).then(rb.cmp(ra)))
                .map(|(pos, _)| pos)
                .expect("non-empty");
            prefs.remove(oldest);
        } else if !history.is_empty() {
            history.remove(0);
        } else {
            break;
        }
        prompt = build(&prefs, &history);
    }
    prompt
}

fn retrieval_terms(session: &ChatSession, query: &str) -> Vec<String> {
    let mut text = query.to_string();
    for section in &session.menu.sections {
        text.push(' ');
        text.push_str(&section.title);
    }
    tokenize(&text)
}

/// One chat turn: retrieve, rank, and answer.
///
/// The ranked list always comes from the deterministic ranking; a model,
/// when given, only writes the text. If the model fails the template text is
/// used and `degraded` is set. The turn is recorded in history on success.
pub fn chat(
    session: &mut ChatSession,
    query: &str,
    k: usize,
    llm: Option<&dyn CompletionClient>,
) -> Result<Recommendation> {
    let hits = retrieve_topk(&session.index, &retrieval_terms(session, query), session.config.k_docs);
    let mut rec = fallback_recommend(session, k)?;
    rec.evidence = hits.iter().map(|(id, _)| id.clone()).collect();

    if let Some(client) = llm {
        let retrieved: Vec<&PreferenceDoc> = hits.iter().filter_map(|(id, _)| session.doc(id)).collect();
        let prompt = assemble_prompt(session, &retrieved, query);
        match client.complete(&[ChatMessage::system(SYSTEM_INSTRUCTION), ChatMessage::user(prompt)]) {
            Ok(c) => {
                rec.text = c.text;
                rec.degraded = false;
            }
            Err(e) => log::warn!("answer model failed, using template answer: {e}"),
        }
    }

    session.history.push(Turn { role: Role::User, text: query.to_string() });
    session.history.push(Turn { role: Role::Assistant, text: rec.text.clone() });
    Ok(rec)
}

/// Rejects items and answers the last query again.
///
/// Unknown ids fail before any state changes. With no earlier query the
/// canonical one is used.
pub fn regenerate(
    session: &mut ChatSession,
    rejected: &[ItemId],
    k: usize,
    llm: Option<&dyn CompletionClient>,
) -> Result<Recommendation> {
    if let Some(bad) = rejected.iter().find(|id| session.menu.item(**id).is_none()) {
        return Err(Error::UnknownItem(bad.to_string()));
    }
    session.rejected_items.extend(rejected.iter().copied());
    let query = session.last_user_query().unwrap_or(CANONICAL_QUERY).to_string();
    chat(session, &query, k, llm)
}
