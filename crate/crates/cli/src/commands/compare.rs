//! `compare`: evaluate every steering mode with shared localization and
//! seeds, emitting one comparison table.

use austeer_core::eval::{compare_modes, CompareConfig};

use crate::config::{expand_sites, load_inputs, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::report::{comparison_to_csv, reports_to_json, write_text};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let pairs = inputs
        .pairs
        .as_ref()
        .ok_or_else(|| CliError::config("compare requires `pairs` or a `synthetic` section"))?;
    let items = inputs
        .items
        .as_ref()
        .ok_or_else(|| CliError::config("compare requires `items` or a `synthetic` section"))?;
    let sites = expand_sites(&cfg.sites, inputs.model.config())?;
    let block_site = super::plan::block_site(cfg, inputs.model.config().n_layers)?;

    let compare_cfg = CompareConfig {
        sites,
        k: cfg.strategy.k,
        alpha: cfg.strategy.alpha,
        seed: cfg.seed,
        fixed_gamma: cfg.strategy.gamma,
        suppress_fraction: cfg.strategy.fraction,
        suppress_factor: cfg.strategy.factor,
        block_site,
        max_new: cfg.max_new,
        dataset_id: super::eval::dataset_id(cfg),
    };
    let reports = compare_modes(&inputs.model, &inputs.tokenizer, pairs, items, &compare_cfg)?;

    super::with_out_dir(cfg, |out| {
        write_text(&out.join("compare.json"), &(reports_to_json(&reports) + "\n"))?;
        write_text(&out.join("compare.csv"), &comparison_to_csv(&reports))?;
        Ok(vec!["compare.json".into(), "compare.csv".into()])
    })?;
    println!("{:<16} {:>10} {:>10}", "mode", "footprint", "accuracy");
    for r in &reports {
        println!(
            "{:<16} {:>10} {:>10.4}",
            r.provenance.mode, r.footprint, r.accuracy
        );
    }
    Ok(())
}
