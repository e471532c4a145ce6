//! Line-delimited JSON datasets: contrastive pairs and QA items.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use austeer_core::data::{ContrastivePair, QAItem};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct PairWire {
    id: String,
    positive: String,
    negative: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    meta: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ItemWire {
    id: String,
    question: String,
    correct: String,
    wrong_pool: Vec<String>,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    let lines: Vec<(usize, String)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect();
    if lines.is_empty() {
        return Err(CliError::data(format!("{}: empty file", path.display())));
    }
    Ok(lines)
}

/// Load contrastive pairs, preserving file order. Malformed lines report
/// their 1-based line number; duplicate ids are rejected.
pub fn load_pairs(path: &Path) -> Result<Vec<ContrastivePair>> {
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let wire: PairWire = serde_json::from_str(&line).map_err(|e| {
            CliError::data(format!("{}:{line_no}: malformed pair: {e}", path.display()))
        })?;
        if !seen.insert(wire.id.clone()) {
            return Err(CliError::data(format!(
                "{}:{line_no}: duplicate pair id `{}`",
                path.display(),
                wire.id
            )));
        }
        let mut pair = ContrastivePair::new(wire.id, wire.positive, wire.negative)
            .map_err(|e| CliError::data(format!("{}:{line_no}: {e}", path.display())))?;
        pair.meta = wire.meta;
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn save_pairs(path: &Path, pairs: &[ContrastivePair]) -> Result<()> {
    let mut out = String::new();
    for pair in pairs {
        let wire = PairWire {
            id: pair.id.clone(),
            positive: pair.positive.clone(),
            negative: pair.negative.clone(),
            meta: pair.meta.clone(),
        };
        out.push_str(&serde_json::to_string(&wire).expect("pair serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

/// Load QA items; same error contract as [`load_pairs`].
pub fn load_items(path: &Path) -> Result<Vec<QAItem>> {
    let mut seen = BTreeSet::new();
    let mut items = Vec::new();
    for (line_no, line) in read_lines(path)? {
        let wire: ItemWire = serde_json::from_str(&line).map_err(|e| {
            CliError::data(format!("{}:{line_no}: malformed item: {e}", path.display()))
        })?;
        if !seen.insert(wire.id.clone()) {
            return Err(CliError::data(format!(
                "{}:{line_no}: duplicate item id `{}`",
                path.display(),
                wire.id
            )));
        }
        items.push(
            QAItem::new(wire.id, wire.question, wire.correct, wire.wrong_pool)
                .map_err(|e| CliError::data(format!("{}:{line_no}: {e}", path.display())))?,
        );
    }
    Ok(items)
}

pub fn save_items(path: &Path, items: &[QAItem]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        let wire = ItemWire {
            id: item.id.clone(),
            question: item.question.clone(),
            correct: item.correct.clone(),
            wrong_pool: item.wrong_pool.clone(),
        };
        out.push_str(&serde_json::to_string(&wire).expect("item serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}
