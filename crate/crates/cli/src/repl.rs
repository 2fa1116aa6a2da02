//! Line-oriented chat loop.
//!
//! Each input line is a query, except for commands:
//! `:reject <id>...` drops items and asks again, `:quit` leaves.
//! Answers go to stdout; prompts and notices go to stderr.

use std::io::{BufRead, IsTerminal, Write};
use std::path::Path;

use anyhow::{Context, Result};
use menulens_core::llm::CompletionClient;
use menulens_core::menu::{menu_from_json, ItemId};
use menulens_core::prefs::{load_profile_dir, PreferenceDoc};
use menulens_core::recommend::{chat, regenerate, ChatSession, Recommendation};
use menulens_core::Error;

fn load_prefs(path: Option<&Path>) -> Result<Vec<PreferenceDoc>> {
    match path {
        None => Ok(Vec::new()),
        Some(p) if p.is_dir() => Ok(load_profile_dir(p)?),
        Some(p) => {
            let bytes = super::read(p)?;
            serde_json::from_slice(&bytes).with_context(|| format!("reading preference documents {}", p.display()))
        }
    }
}

fn print(out: &mut impl Write, rec: &Recommendation) -> Result<()> {
    let ids: Vec<String> = rec.ranked.iter().map(|r| r.item_id.to_string()).collect();
    writeln!(out, "{}", rec.text)?;
    writeln!(out, "ids: {}", ids.join(" "))?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn run(
    menu_path: &Path,
    prefs: Option<&Path>,
    k: usize,
    llm: Option<&dyn CompletionClient>,
    input: impl BufRead,
    mut out: impl Write,
) -> Result<()> {
    let menu = menu_from_json(&super::read(menu_path)?).with_context(|| format!("reading {}", menu_path.display()))?;
    if menu.item_count() == 0 {
        return Err(Error::EmptyMenu.into());
    }
    let mut session = ChatSession::new("cli", menu, load_prefs(prefs)?)?;
    let interactive = std::io::stdin().is_terminal();
    if interactive {
        eprintln!("Ask about the menu. Commands: :reject <id>... , :quit");
    }
    let mut lines = input.lines();
    loop {
        if interactive {
            eprint!("> ");
        }
        let Some(line) = lines.next() else { break };
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let result = if line == ":quit" {
            break;
        } else if let Some(rest) = line.strip_prefix(":reject") {
            let ids: Result<Vec<ItemId>, _> = rest.split_whitespace().map(str::parse).collect();
            match ids {
                Ok(ids) if !ids.is_empty() => regenerate(&mut session, &ids, k, llm),
                Ok(_) => {
                    eprintln!("usage: :reject <section.item>...");
                    continue;
                }
                Err(e) => Err(e),
            }
        } else if line.starts_with(':') {
            eprintln!("unknown command {line:?}; try :reject <id> or :quit");
            continue;
        } else {
            chat(&mut session, line, k, llm)
        };
        match result {
            Ok(rec) => print(&mut out, &rec)?,
            Err(e @ (Error::NoEligibleItems | Error::UnknownItem(_) | Error::Parse { .. } | Error::Schema { .. })) => {
                eprintln!("{e}")
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
