//! Score and stats files emitted by localization.
//!
//! `scores.json`: `[{site, dim, r_pos, r_neg, score, direction, mean_abs_m}]`.
//! `stats.json` carries the raw streaming fields so additive plans (fixed
//! vector, block baseline) can be rebuilt without re-running localization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use austeer_core::momentum::{AUScore, Direction, MomentumStats};

use crate::error::{CliError, Result};
use crate::formats::wire::SiteWire;

#[derive(Debug, Serialize, Deserialize)]
struct ScoreWire {
    site: SiteWire,
    dim: usize,
    r_pos: f64,
    r_neg: f64,
    score: f64,
    direction: String,
    mean_abs_m: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct StatsWire {
    site: SiteWire,
    dim: usize,
    n_pos: u64,
    n_neg: u64,
    n_zero: u64,
    n_total: u64,
    sum_m: f64,
    sum_abs_m: f64,
}

pub fn scores_to_json(scores: &[AUScore]) -> String {
    let wires: Vec<ScoreWire> = scores
        .iter()
        .map(|s| ScoreWire {
            site: SiteWire::from_site(&s.au.site),
            dim: s.au.dim,
            r_pos: s.r_pos,
            r_neg: s.r_neg,
            score: s.score,
            direction: s.direction.as_str().to_string(),
            mean_abs_m: s.mean_abs_m,
        })
        .collect();
    serde_json::to_string_pretty(&wires).expect("scores serialize")
}

pub fn scores_from_json(text: &str) -> Result<Vec<AUScore>> {
    let wires: Vec<ScoreWire> = serde_json::from_str(text)
        .map_err(|e| CliError::data(format!("malformed scores JSON: {e}")))?;
    wires
        .iter()
        .map(|w| {
            let direction = match w.direction.as_str() {
                "promote" => Direction::Promote,
                "suppress" => Direction::Suppress,
                other => {
                    return Err(CliError::data(format!("unknown direction `{other}`")));
                }
            };
            Ok(AUScore {
                au: austeer_core::audecomp::AUId::new(w.site.to_site()?, w.dim),
                r_pos: w.r_pos,
                r_neg: w.r_neg,
                score: w.score,
                direction,
                mean_abs_m: w.mean_abs_m,
            })
        })
        .collect()
}

pub fn stats_to_json(stats: &[MomentumStats]) -> String {
    let wires: Vec<StatsWire> = stats
        .iter()
        .map(|s| StatsWire {
            site: SiteWire::from_site(&s.au.site),
            dim: s.au.dim,
            n_pos: s.n_pos,
            n_neg: s.n_neg,
            n_zero: s.n_zero,
            n_total: s.n_total,
            sum_m: s.sum_m,
            sum_abs_m: s.sum_abs_m,
        })
        .collect();
    serde_json::to_string_pretty(&wires).expect("stats serialize")
}

pub fn stats_from_json(text: &str) -> Result<Vec<MomentumStats>> {
    let wires: Vec<StatsWire> = serde_json::from_str(text)
        .map_err(|e| CliError::data(format!("malformed stats JSON: {e}")))?;
    wires
        .iter()
        .map(|w| {
            Ok(MomentumStats {
                au: austeer_core::audecomp::AUId::new(w.site.to_site()?, w.dim),
                n_pos: w.n_pos,
                n_neg: w.n_neg,
                n_zero: w.n_zero,
                n_total: w.n_total,
                sum_m: w.sum_m,
                sum_abs_m: w.sum_abs_m,
            })
        })
        .collect()
}

pub fn save_scores(path: &Path, scores: &[AUScore]) -> Result<()> {
    fs::write(path, scores_to_json(scores) + "\n")
        .map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

pub fn load_scores(path: &Path) -> Result<Vec<AUScore>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    scores_from_json(&text)
}

pub fn save_stats(path: &Path, stats: &[MomentumStats]) -> Result<()> {
    fs::write(path, stats_to_json(stats) + "\n")
        .map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}

pub fn load_stats(path: &Path) -> Result<Vec<MomentumStats>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    stats_from_json(&text)
}
