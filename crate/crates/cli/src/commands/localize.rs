//! `localize`: momentum stats and discriminative scores for every AU of the
//! selected sites.

use austeer_core::momentum::{rank_scores, AUScore, MomentumStats};

use crate::config::{expand_sites, load_inputs, RunConfig};
use crate::error::{CliError, Result};
use crate::formats::scores::{save_scores, save_stats};
use crate::jobs::localize_stats_jobs;

pub fn run(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let pairs = inputs
        .pairs
        .as_ref()
        .ok_or_else(|| CliError::config("localize requires `pairs` or a `synthetic` section"))?;
    let sites = expand_sites(&cfg.sites, inputs.model.config())?;
    let stats = localize_stats_jobs(&inputs.model, &inputs.tokenizer, pairs, &sites, cfg.jobs)?;
    let scores: Vec<AUScore> = stats
        .iter()
        .map(MomentumStats::finalize)
        .collect::<austeer_core::error::Result<_>>()?;

    super::with_out_dir(cfg, |out| {
        save_scores(&out.join("scores.json"), &scores)?;
        save_stats(&out.join("stats.json"), &stats)?;
        Ok(vec!["scores.json".into(), "stats.json".into()])
    })?;
    print_top_table(&scores, 20);
    Ok(())
}

fn print_top_table(scores: &[AUScore], limit: usize) {
    println!(
        "localized {} AUs; top {} by discriminative score:",
        scores.len(),
        limit.min(scores.len())
    );
    println!(
        "{:>4}  {:<24} {:>6} {:>6} {:>6}  {:<8} {:>10}",
        "rank", "au", "r_pos", "r_neg", "score", "dir", "mean|m|"
    );
    for (i, s) in rank_scores(scores).iter().take(limit).enumerate() {
        println!(
            "{:>4}  {:<24} {:>6.3} {:>6.3} {:>6.3}  {:<8} {:>10.4}",
            i + 1,
            s.au.to_string(),
            s.r_pos,
            s.r_neg,
            s.score,
            s.direction.as_str(),
            s.mean_abs_m
        );
    }
}
