//! `eval`: exact-match accuracy of an optional plan over a QA dataset.

use std::path::Path;

use crate::config::{load_inputs, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::plan::load_plan;
use crate::formats::report::{report_to_csv, report_to_json, write_text};
use crate::jobs::evaluate_jobs;

pub fn dataset_id(cfg: &RunConfig) -> String {
    cfg.items
        .as_deref()
        .and_then(Path::file_stem)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "synthetic".to_string())
}

pub fn run(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let items = inputs
        .items
        .as_ref()
        .ok_or_else(|| CliError::config("eval requires `items` or a `synthetic` section"))?;
    let plan = match &cfg.plan {
        Some(path) => Some(load_plan(path)?),
        None => None,
    };
    let report = evaluate_jobs(
        &inputs.model,
        &inputs.tokenizer,
        plan.as_ref(),
        items,
        &dataset_id(cfg),
        cfg.max_new,
        cfg.jobs,
    )?;

    super::with_out_dir(cfg, |out| {
        write_text(&out.join("report.json"), &(report_to_json(&report) + "\n"))?;
        write_text(&out.join("report.csv"), &report_to_csv(&report))?;
        Ok(vec!["report.json".into(), "report.csv".into()])
    })?;
    println!(
        "{} on {}: accuracy {:.4} ({}/{} correct, footprint {})",
        report.plan_label,
        report.dataset_id,
        report.accuracy,
        report.items.iter().filter(|r| r.correct).count(),
        report.n,
        report.footprint
    );
    Ok(())
}
