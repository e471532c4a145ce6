//! `sweep`: localize once, then evaluate an AUSteer plan for every (k,
//! alpha) grid cell.

use austeer_core::eval::{SweepCell, SweepResult};
use austeer_core::momentum::MomentumStats;
use austeer_core::steering::build_austeer;

use crate::config::{expand_sites, load_inputs, RunConfig, SweepConfig};
use crate::error::{CliError, Result};
use crate::formats::report::{sweep_to_csv, sweep_to_json, write_text};
use crate::jobs::{evaluate_jobs, localize_stats_jobs};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let sweep_cfg = cfg.sweep.clone().unwrap_or_default();
    if sweep_cfg.k_grid.iter().any(|&k| k > cfg.budget) {
        return Err(CliError::config(format!(
            "sweep k_grid exceeds budget {}",
            cfg.budget
        )));
    }
    let inputs = load_inputs(cfg)?;
    let pairs = inputs
        .pairs
        .as_ref()
        .ok_or_else(|| CliError::config("sweep requires `pairs` or a `synthetic` section"))?;
    let items = inputs
        .items
        .as_ref()
        .ok_or_else(|| CliError::config("sweep requires `items` or a `synthetic` section"))?;
    let val_items = match sweep_cfg.val_size {
        Some(n) => &items[..n.min(items.len())],
        None => items.as_slice(),
    };

    // Scores are frozen once; every grid cell reuses them.
    let sites = expand_sites(&cfg.sites, inputs.model.config())?;
    let stats = localize_stats_jobs(&inputs.model, &inputs.tokenizer, pairs, &sites, cfg.jobs)?;
    let scores: Vec<_> = stats
        .iter()
        .map(MomentumStats::finalize)
        .collect::<austeer_core::error::Result<_>>()?;

    let result = run_grid(cfg, &sweep_cfg, &inputs, &scores, val_items)?;

    super::with_out_dir(cfg, |out| {
        write_text(&out.join("sweep.csv"), &sweep_to_csv(&result))?;
        write_text(&out.join("sweep.json"), &(sweep_to_json(&result) + "\n"))?;
        Ok(vec!["sweep.csv".into(), "sweep.json".into()])
    })?;
    println!(
        "swept {} cells on {} validation items; best k={} alpha={} accuracy={:.4}",
        result.grid.len(),
        val_items.len(),
        result.best.k,
        result.best.alpha,
        result.best.accuracy
    );
    Ok(())
}

fn run_grid(
    cfg: &RunConfig,
    sweep_cfg: &SweepConfig,
    inputs: &crate::config::Inputs,
    scores: &[austeer_core::momentum::AUScore],
    val_items: &[austeer_core::data::QAItem],
) -> Result<SweepResult> {
    let dataset = super::eval::dataset_id(cfg);
    let mut grid = Vec::with_capacity(sweep_cfg.k_grid.len() * sweep_cfg.alpha_grid.len());
    for &k in &sweep_cfg.k_grid {
        for &alpha in &sweep_cfg.alpha_grid {
            let plan = build_austeer(scores, k, alpha)?;
            let report = evaluate_jobs(
                &inputs.model,
                &inputs.tokenizer,
                Some(&plan),
                val_items,
                &dataset,
                cfg.max_new,
                cfg.jobs,
            )?;
            grid.push(SweepCell {
                k,
                alpha,
                accuracy: report.accuracy,
            });
        }
    }
    Ok(SweepResult::from_grid(grid)?)
}
