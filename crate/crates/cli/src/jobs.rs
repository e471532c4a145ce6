//! Bounded-concurrency helpers. `--jobs N` caps the number of concurrent
//! forward passes; results are always assembled in input order, so outputs
//! are byte-identical regardless of N.

use austeer_core::data::{ContrastivePair, QAItem, Tokenizer};
use austeer_core::eval::{assemble_report, evaluate_item, EvalReport};
use austeer_core::model::{HookSite, Model};
use austeer_core::momentum::{pair_site_momenta, MomentumAccumulator, MomentumStats};
use austeer_core::steering::SteeringPlan;

use crate::error::{CliError, Result};

/// Order-preserving parallel map over contiguous chunks.
pub fn parallel_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (input, output) in items.chunks(chunk).zip(slots.chunks_mut(chunk)) {
            let f = &f;
            scope.spawn(move || {
                for (item, slot) in input.iter().zip(output.iter_mut()) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    slots.into_iter().map(|r| r.expect("chunk filled")).collect()
}

/// Localization with up to `jobs` concurrent pair recordings. Momenta are
/// accumulated in pair order, matching the sequential path exactly.
pub fn localize_stats_jobs(
    model: &Model,
    tokenizer: &Tokenizer,
    pairs: &[ContrastivePair],
    sites: &[HookSite],
    jobs: usize,
) -> Result<Vec<MomentumStats>> {
    if pairs.is_empty() {
        return Err(CliError::data("localize: no contrastive pairs"));
    }
    let mut acc = MomentumAccumulator::new(model, sites).map_err(CliError::config)?;
    let canonical = acc.sites().to_vec();
    let momenta = parallel_map(jobs, pairs, |pair| {
        pair_site_momenta(model, tokenizer, pair, &canonical)
    });
    for result in momenta {
        acc.add_pair_momenta(&result.map_err(CliError::data)?)
            .map_err(CliError::data)?;
    }
    Ok(acc.finish())
}

/// Evaluation with up to `jobs` concurrent item generations.
pub fn evaluate_jobs(
    model: &Model,
    tokenizer: &Tokenizer,
    plan: Option<&SteeringPlan>,
    items: &[QAItem],
    dataset_id: &str,
    max_new: usize,
    jobs: usize,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(CliError::data("evaluate: no items"));
    }
    let records = parallel_map(jobs, items, |item| {
        evaluate_item(model, tokenizer, plan, item, max_new)
    });
    Ok(assemble_report(plan, dataset_id, records))
}
