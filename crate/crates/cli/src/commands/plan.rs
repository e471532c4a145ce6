//! `plan`: build a steering plan from frozen scores (or, for the baselines,
//! from the model and pairs) and write it as a plan file.

use austeer_core::model::HookSite;
use austeer_core::steering::{self, SteeringPlan};

use crate::config::{expand_sites, load_inputs, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::plan::save_plan;
use crate::formats::scores::{load_scores, load_stats};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let strategy = &cfg.strategy;
    let load_scores_file = || -> Result<_> {
        let path = cfg.scores.as_ref().ok_or_else(|| {
            CliError::config("this strategy needs a scores file: set `scores` or pass --scores")
        })?;
        if !path.exists() {
            return Err(CliError::config(format!(
                "scores path {} does not exist",
                path.display()
            )));
        }
        load_scores(path)
    };

    let plan: SteeringPlan = match strategy.mode.as_str() {
        "austeer" => steering::build_austeer(&load_scores_file()?, strategy.k, strategy.alpha)?,
        "fixed_strength" => {
            steering::build_fixed_strength(&load_scores_file()?, strategy.k, strategy.gamma)?
        }
        "suppression" => steering::build_suppression(
            &load_scores_file()?,
            strategy.fraction,
            strategy.factor,
        )?,
        "fixed_vector" => {
            let stats_path = cfg.stats.as_ref().ok_or_else(|| {
                CliError::config("fixed_vector needs the stats file: set `stats`")
            })?;
            if !stats_path.exists() {
                return Err(CliError::config(format!(
                    "stats path {} does not exist",
                    stats_path.display()
                )));
            }
            steering::build_fixed_vector(&load_scores_file()?, &load_stats(stats_path)?, strategy.k)?
        }
        "random" => {
            let inputs = load_inputs(cfg)?;
            let sites = expand_sites(&cfg.sites, inputs.model.config())?;
            steering::build_random(&inputs.model, &sites, strategy.k, strategy.alpha, cfg.seed)?
        }
        "block_mean_diff" => {
            let inputs = load_inputs(cfg)?;
            let pairs = inputs.pairs.as_ref().ok_or_else(|| {
                CliError::config("block_mean_diff requires `pairs` or a `synthetic` section")
            })?;
            let site = block_site(cfg, inputs.model.config().n_layers)?;
            steering::build_block_mean_diff(&inputs.model, &inputs.tokenizer, pairs, site)?
        }
        other => {
            return Err(CliError::config(format!(
                "unknown strategy mode `{other}` (expected austeer, random, fixed_vector, \
                 fixed_strength, suppression, or block_mean_diff)"
            )))
        }
    };

    super::with_out_dir(cfg, |out| {
        save_plan(&out.join("plan.json"), &plan)?;
        Ok(vec!["plan.json".into()])
    })?;
    println!(
        "built {} plan: {} entries",
        plan.provenance().strategy,
        plan.len()
    );
    for entry in plan.entries().iter().take(8) {
        println!("  {}  {:?}", entry.au, entry.action);
    }
    if plan.len() > 8 {
        println!("  ... {} more", plan.len() - 8);
    }
    Ok(())
}

pub fn block_site(cfg: &RunConfig, n_layers: usize) -> Result<HookSite> {
    match &cfg.strategy.block_site {
        Some(wire) => wire.to_site().map_err(|e| CliError::config(e)),
        None => Ok(HookSite::ffn_hidden(n_layers - 1)),
    }
}
