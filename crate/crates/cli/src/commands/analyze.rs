//! `analyze`: KL convergence, pairwise divergence, steered top-k tables,
//! and the first-order Taylor check.

use austeer_core::analysis::{
    kl_convergence, pairwise_divergence, steered_topk, taylor_check, DEFAULT_STRENGTHS,
};
use austeer_core::audecomp::AUId;
use austeer_core::data::qa_prompt;
use austeer_core::steering::SteeringPlan;

use crate::config::{load_inputs, AnalyzeConfig, Inputs, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::plan::load_plan;
use crate::formats::report::write_text;
use crate::formats::series::{series_to_csv, series_to_json, taylor_to_json, token_table_to_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyzeKind {
    Kl,
    Pairwise,
    Topk,
    Taylor,
}

fn resolve_prompt(an: &AnalyzeConfig, inputs: &Inputs) -> Result<(String, Vec<u32>)> {
    if let Some(text) = &an.prompt {
        let tokens = inputs.tokenizer.tokenize(text);
        if tokens.is_empty() {
            return Err(CliError::data("analyze prompt tokenizes to zero tokens"));
        }
        return Ok(("prompt".to_string(), tokens));
    }
    let items = inputs
        .items
        .as_ref()
        .ok_or_else(|| CliError::config("analyze needs a `prompt` or an items dataset"))?;
    let item = items.get(an.item_index).ok_or_else(|| {
        CliError::config(format!(
            "analyze item_index {} out of range ({} items)",
            an.item_index,
            items.len()
        ))
    })?;
    let tokens = inputs.tokenizer.tokenize(&qa_prompt(&item.question));
    if tokens.is_empty() {
        return Err(CliError::data("analyze prompt tokenizes to zero tokens"));
    }
    Ok((item.id.clone(), tokens))
}

/// The primary AU: explicit config wins, else the planted target of a
/// synthetic run.
fn resolve_au(an: &AnalyzeConfig, inputs: &Inputs) -> Result<AUId> {
    match (&an.au, inputs.planted) {
        (Some(wire), _) => wire.to_au().map_err(|e| CliError::config(e)),
        (None, Some((target, _))) => Ok(target),
        (None, None) => Err(CliError::config("analyze needs `analyze.au`")),
    }
}

fn resolve_au_b(an: &AnalyzeConfig, inputs: &Inputs) -> Result<AUId> {
    match (&an.au_b, inputs.planted) {
        (Some(wire), _) => wire.to_au().map_err(|e| CliError::config(e)),
        (None, Some((_, distractor))) => Ok(distractor),
        (None, None) => Err(CliError::config("analyze pairwise needs `analyze.au_b`")),
    }
}

pub fn run(cfg: &RunConfig, kind: AnalyzeKind) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let an = cfg.analyze.clone().unwrap_or_default();
    let strengths = an
        .strengths
        .clone()
        .unwrap_or_else(|| DEFAULT_STRENGTHS.to_vec());
    let (prompt_id, tokens) = resolve_prompt(&an, &inputs)?;

    match kind {
        AnalyzeKind::Kl => {
            let au = resolve_au(&an, &inputs)?;
            let series = kl_convergence(&inputs.model, &tokens, au, &strengths)?;
            super::with_out_dir(cfg, |out| {
                write_text(&out.join("kl_series.csv"), &series_to_csv(&series))?;
                write_text(&out.join("kl_series.json"), &(series_to_json(&series) + "\n"))?;
                Ok(vec!["kl_series.csv".into(), "kl_series.json".into()])
            })?;
            println!(
                "kl convergence for {au} over {} strengths (normalized: {}): {:?}",
                series.strengths.len(),
                series.normalized,
                series.values
            );
            Ok(())
        }
        AnalyzeKind::Pairwise => {
            let au_a = resolve_au(&an, &inputs)?;
            let au_b = resolve_au_b(&an, &inputs)?;
            let series = pairwise_divergence(&inputs.model, &tokens, au_a, au_b, &strengths)?;
            super::with_out_dir(cfg, |out| {
                write_text(&out.join("pairwise_series.csv"), &series_to_csv(&series))?;
                write_text(
                    &out.join("pairwise_series.json"),
                    &(series_to_json(&series) + "\n"),
                )?;
                Ok(vec![
                    "pairwise_series.csv".into(),
                    "pairwise_series.json".into(),
                ])
            })?;
            println!("pairwise divergence {au_a} vs {au_b}: {:?}", series.values);
            Ok(())
        }
        AnalyzeKind::Topk => {
            let plan = match &cfg.plan {
                Some(path) => load_plan(path)?,
                None => SteeringPlan::empty("vanilla"),
            };
            let table = steered_topk(
                &inputs.model,
                &inputs.tokenizer,
                &prompt_id,
                &tokens,
                &plan,
                an.topk,
            )?;
            super::with_out_dir(cfg, |out| {
                write_text(&out.join("topk.json"), &(token_table_to_json(&table) + "\n"))?;
                Ok(vec!["topk.json".into()])
            })?;
            println!("top-{} tokens under plan `{}`:", table.k, table.plan_label);
            for (token, p) in &table.rows {
                println!("  {token:<12} {p:.4}");
            }
            Ok(())
        }
        AnalyzeKind::Taylor => {
            let au = resolve_au(&an, &inputs)?;
            let pairs = inputs
                .pairs
                .as_ref()
                .ok_or_else(|| CliError::config("analyze taylor requires pairs"))?;
            let pair = pairs.get(an.pair_index).ok_or_else(|| {
                CliError::config(format!(
                    "analyze pair_index {} out of range ({} pairs)",
                    an.pair_index,
                    pairs.len()
                ))
            })?;
            let record = taylor_check(&inputs.model, &inputs.tokenizer, pair, au, an.epsilon)?;
            super::with_out_dir(cfg, |out| {
                write_text(&out.join("taylor.json"), &(taylor_to_json(&record) + "\n"))?;
                Ok(vec!["taylor.json".into()])
            })?;
            println!(
                "taylor check at {au} on pair `{}`: |observed|={:.4e} |predicted|={:.4e} rel={:.4e}",
                pair.id, record.delta_logits_norm, record.predicted_norm, record.relative_error
            );
            Ok(())
        }
    }
}
