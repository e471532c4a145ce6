//! Exact-match evaluation, the k x alpha sweep, and the steering-mode
//! comparison grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::audecomp::AUId;
use crate::data::{qa_prompt, ContrastivePair, QAItem, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{HookSite, Model};
use crate::momentum::{self, AUScore, Direction, MomentumStats};
use crate::steering::{self, SteeringEntry, SteeringPlan};

/// One evaluated item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRecord {
    pub id: String,
    pub predicted: String,
    pub expected: String,
    pub correct: bool,
    /// Per-item failure (tokenization, length); the item counts as incorrect.
    pub error: Option<String>,
}

/// Where a report came from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalProvenance {
    pub mode: String,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
}

/// Exact-match accuracy over a dataset under one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub plan_label: String,
    pub dataset_id: String,
    pub n: usize,
    pub accuracy: f64,
    /// Number of intervened activations (0 for vanilla).
    pub footprint: usize,
    pub items: Vec<ItemRecord>,
    pub provenance: EvalProvenance,
    /// Caveats about the mode (best-effort readings, sign conventions).
    pub note: Option<String>,
}

/// Evaluate one item: greedy-generate from the question template and compare
/// the whitespace-trimmed continuation with the expected answer,
/// case-sensitively.
pub fn evaluate_item(
    model: &Model,
    tokenizer: &Tokenizer,
    plan: Option<&SteeringPlan>,
    item: &QAItem,
    max_new: usize,
) -> ItemRecord {
    let prompt = qa_prompt(&item.question);
    let tokens = tokenizer.tokenize(&prompt);
    if tokens.is_empty() {
        return ItemRecord {
            id: item.id.clone(),
            predicted: String::new(),
            expected: item.correct.clone(),
            correct: false,
            error: Some("prompt tokenizes to zero tokens".into()),
        };
    }
    match model.generate_greedy(&tokens, max_new, plan) {
        Ok(generated) => {
            let predicted = tokenizer.detokenize(&generated).trim().to_string();
            let correct = predicted == item.correct;
            ItemRecord {
                id: item.id.clone(),
                predicted,
                expected: item.correct.clone(),
                correct,
                error: None,
            }
        }
        Err(e) => ItemRecord {
            id: item.id.clone(),
            predicted: String::new(),
            expected: item.correct.clone(),
            correct: false,
            error: Some(format!("{e}")),
        },
    }
}

/// Assemble a report from per-item records (in item order).
pub fn assemble_report(
    plan: Option<&SteeringPlan>,
    dataset_id: &str,
    items: Vec<ItemRecord>,
) -> EvalReport {
    let n = items.len();
    let correct = items.iter().filter(|r| r.correct).count();
    let (plan_label, provenance) = match plan {
        Some(p) => (
            p.label().to_string(),
            EvalProvenance {
                mode: p.provenance().strategy.clone(),
                k: p.provenance().k,
                alpha: p.provenance().alpha,
                seed: p.provenance().seed,
            },
        ),
        None => (
            "vanilla".to_string(),
            EvalProvenance {
                mode: "vanilla".to_string(),
                k: None,
                alpha: None,
                seed: None,
            },
        ),
    };
    EvalReport {
        plan_label,
        dataset_id: dataset_id.to_string(),
        n,
        accuracy: correct as f64 / n as f64,
        footprint: plan.map_or(0, SteeringPlan::len),
        items,
        provenance,
        note: None,
    }
}

/// Exact-match evaluation of all items under an optional plan.
pub fn evaluate(
    model: &Model,
    tokenizer: &Tokenizer,
    plan: Option<&SteeringPlan>,
    items: &[QAItem],
    dataset_id: &str,
    max_new: usize,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::Data("evaluate: no items".into()));
    }
    let records = items
        .iter()
        .map(|item| evaluate_item(model, tokenizer, plan, item, max_new))
        .collect();
    Ok(assemble_report(plan, dataset_id, records))
}

/// One sweep cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub k: usize,
    pub alpha: f64,
    pub accuracy: f64,
}

/// Full sweep grid plus its argmax (ties: smaller k, then smaller alpha).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub grid: Vec<SweepCell>,
    pub best: SweepCell,
}

impl SweepResult {
    /// Pick the best cell (accuracy desc, then smaller k, then smaller alpha).
    pub fn from_grid(grid: Vec<SweepCell>) -> Result<Self> {
        let best = *grid
            .iter()
            .max_by(|a, b| {
                a.accuracy
                    .total_cmp(&b.accuracy)
                    .then_with(|| b.k.cmp(&a.k))
                    .then_with(|| b.alpha.total_cmp(&a.alpha))
            })
            .ok_or_else(|| Error::Param("sweep: empty grid".into()))?;
        Ok(SweepResult { grid, best })
    }
}

/// Evaluate an AUSteer plan for every (k, alpha) cell, reusing the frozen
/// scores. Localization runs once, outside this function.
pub fn sweep(
    model: &Model,
    tokenizer: &Tokenizer,
    scores: &[AUScore],
    items_val: &[QAItem],
    k_grid: &[usize],
    alpha_grid: &[f64],
    max_new: usize,
    dataset_id: &str,
) -> Result<SweepResult> {
    if k_grid.is_empty() || alpha_grid.is_empty() {
        return Err(Error::Param("sweep: empty grid".into()));
    }
    if items_val.is_empty() {
        return Err(Error::Data("sweep: empty validation set".into()));
    }
    let mut grid = Vec::with_capacity(k_grid.len() * alpha_grid.len());
    for &k in k_grid {
        for &alpha in alpha_grid {
            let plan = steering::build_austeer(scores, k, alpha)?;
            let report = evaluate(model, tokenizer, Some(&plan), items_val, dataset_id, max_new)?;
            grid.push(SweepCell {
                k,
                alpha,
                accuracy: report.accuracy,
            });
        }
    }
    SweepResult::from_grid(grid)
}

/// Shared knobs for the mode comparison.
#[derive(Debug, Clone)]
pub struct CompareConfig {
    /// Sites localization runs over (also the random baseline's population).
    pub sites: Vec<HookSite>,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
    /// Magnitude for the fixed-strength control.
    pub fixed_gamma: f64,
    /// Share of lowest-scoring AUs the suppression control scales down.
    pub suppress_fraction: f64,
    /// Scale factor of the suppression control, in (0, 1).
    pub suppress_factor: f64,
    /// Site for the full-block mean-difference baseline.
    pub block_site: HookSite,
    pub max_new: usize,
    pub dataset_id: String,
}

/// Evaluate every steering mode with shared localization, seeds, and data:
/// vanilla, austeer, random localization, activation-difference
/// localization, fixed vector, fixed strength, suppression, the block
/// mean-difference baseline, and steer-all (the whole AU population).
pub fn compare_modes(
    model: &Model,
    tokenizer: &Tokenizer,
    pairs: &[ContrastivePair],
    items: &[QAItem],
    cfg: &CompareConfig,
) -> Result<Vec<EvalReport>> {
    let stats = momentum::localize_stats(model, tokenizer, pairs, &cfg.sites)?;
    let scores: Vec<AUScore> = stats
        .iter()
        .map(MomentumStats::finalize)
        .collect::<Result<_>>()?;
    let population = scores.len();

    let mut reports = Vec::new();
    let eval_plan = |plan: Option<&SteeringPlan>| {
        evaluate(model, tokenizer, plan, items, &cfg.dataset_id, cfg.max_new)
    };

    reports.push(eval_plan(None)?);
    reports.push(eval_plan(Some(&steering::build_austeer(
        &scores, cfg.k, cfg.alpha,
    )?))?);
    reports.push(eval_plan(Some(&steering::build_random(
        model, &cfg.sites, cfg.k, cfg.alpha, cfg.seed,
    )?))?);

    let mut act_diff_report = eval_plan(Some(&build_act_diff(
        &scores, &stats, cfg.k, cfg.alpha,
    )?))?;
    act_diff_report.note =
        Some("localization by |mean momentum|; best-effort reading of the ablation".into());
    reports.push(act_diff_report);

    reports.push(eval_plan(Some(&steering::build_fixed_vector(
        &scores, &stats, cfg.k,
    )?))?);

    let mut fixed_strength_report = eval_plan(Some(&steering::build_fixed_strength(
        &scores,
        cfg.k,
        cfg.fixed_gamma,
    )?))?;
    fixed_strength_report.note = Some("fixed gamma signed by AU direction".into());
    reports.push(fixed_strength_report);

    reports.push(eval_plan(Some(&steering::build_suppression(
        &scores,
        cfg.suppress_fraction,
        cfg.suppress_factor,
    )?))?);
    reports.push(eval_plan(Some(&steering::build_block_mean_diff(
        model,
        tokenizer,
        pairs,
        cfg.block_site,
    )?))?);

    let steer_all = steering::build_austeer(&scores, population, cfg.alpha)?
        .relabel("steer_all", "steer_all");
    reports.push(eval_plan(Some(&steer_all))?);

    Ok(reports)
}

/// Activation-difference localization: rank by |mean momentum| instead of
/// the sign-count score, then steer the selected AUs with the usual adaptive
/// gammas.
fn build_act_diff(
    scores: &[AUScore],
    stats: &[MomentumStats],
    k: usize,
    alpha: f64,
) -> Result<SteeringPlan> {
    if k == 0 {
        return Err(Error::Param("act_diff: k must be >= 1".into()));
    }
    let score_by_au: BTreeMap<AUId, &AUScore> = scores.iter().map(|s| (s.au, s)).collect();
    let mut ranked: Vec<(&MomentumStats, f64)> = stats
        .iter()
        .map(|st| Ok((st, libm::fabs(st.mean_momentum()?))))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.au.cmp(&b.0.au)));
    let mut entries = Vec::new();
    for (st, _) in ranked.into_iter().take(k) {
        let score = score_by_au
            .get(&st.au)
            .ok_or_else(|| Error::Param(format!("act_diff: no score for AU {}", st.au)))?;
        let gamma = match score.direction {
            Direction::Promote => (alpha * score.r_pos) as f32,
            Direction::Suppress => (-alpha * score.r_neg) as f32,
        };
        entries.push(SteeringEntry::multiplicative(st.au, gamma));
    }
    let mut provenance = steering::PlanProvenance::new("act_diff");
    provenance.k = Some(k);
    provenance.alpha = Some(alpha);
    SteeringPlan::new("act_diff", provenance, entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic_task, SyntheticSpec};
    use crate::model::{Model, ModelConfig};
    use crate::numerics::{Matrix, Vector};

    fn always_correct_model(vocab: usize, winner: u32) -> (Model, Tokenizer) {
        // Zero everything except a token-independent push toward `winner`.
        let config = ModelConfig {
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_head: 4,
            d_ff: 8,
            vocab_size: vocab,
            max_seq: 32,
            norm_eps: 1e-5,
        };
        let mut tok_emb = Matrix::zeros(vocab, 8);
        let mut lm_head = Matrix::zeros(vocab, 8);
        for col in 0..8 {
            for t in 0..vocab {
                tok_emb.set(t, col, 0.1);
            }
            lm_head.set(winner as usize, col, 1.0);
        }
        let parts = crate::model::ModelParts {
            tok_emb,
            pos_emb: Matrix::zeros(32, 8),
            layers: alloc::vec![crate::model::LayerWeights {
                wq: Matrix::zeros(8, 8),
                wk: Matrix::zeros(8, 8),
                wv: Matrix::zeros(8, 8),
                wo: Matrix::zeros(8, 8),
                w_up: Matrix::zeros(8, 8),
                w_down: Matrix::zeros(8, 8),
                norm1: Vector::new(alloc::vec![1.0; 8]).unwrap(),
                norm2: Vector::new(alloc::vec![1.0; 8]).unwrap(),
            }],
            final_norm: Vector::new(alloc::vec![1.0; 8]).unwrap(),
            lm_head,
        };
        let model = Model::new(config, parts).unwrap();
        let tokenizer = crate::data::synthetic_tokenizer(vocab);
        (model, tokenizer)
    }

    fn items(correct: &str, n: usize) -> Vec<QAItem> {
        (0..n)
            .map(|i| {
                QAItem::new(
                    alloc::format!("i{i}"),
                    alloc::format!("t{} t{}", 3 + i % 4, 4 + i % 4),
                    correct,
                    alloc::vec!["t12".into()],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn evaluate_always_correct_model() {
        let (model, tokenizer) = always_correct_model(16, 7);
        let report = evaluate(&model, &tokenizer, None, &items("t7", 5), "d", 1).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.n, 5);
        assert_eq!(report.plan_label, "vanilla");
    }

    #[test]
    fn evaluate_zero_model_scores_zero() {
        // All-zero weights: every logit ties, argmax picks token 0 (<unk>),
        // which never equals the expected answer string.
        let (model, tokenizer) = always_correct_model(16, 7);
        let mut parts = model.parts().clone();
        parts.lm_head = Matrix::zeros(16, 8);
        let model = Model::new(*model.config(), parts).unwrap();
        let report = evaluate(&model, &tokenizer, None, &items("t7", 4), "d", 1).unwrap();
        assert_eq!(report.accuracy, 0.0);
    }

    #[test]
    fn evaluate_records_per_item_failures() {
        let (model, tokenizer) = always_correct_model(16, 7);
        let mut bad_items = items("t7", 2);
        // A question longer than max_seq forces a per-item failure.
        bad_items[1].question = alloc::vec!["t3"; 40].join(" ");
        let report = evaluate(&model, &tokenizer, None, &bad_items, "d", 1).unwrap();
        assert!(report.items[0].correct);
        assert!(!report.items[1].correct);
        assert!(report.items[1].error.is_some());
        assert_eq!(report.accuracy, 0.5);
    }

    #[test]
    fn evaluate_empty_items_is_error() {
        let (model, tokenizer) = always_correct_model(16, 7);
        assert!(evaluate(&model, &tokenizer, None, &[], "d", 1).is_err());
    }

    #[test]
    fn sweep_single_cell() {
        let task = gen_synthetic_task(&SyntheticSpec::with_seed(8)).unwrap();
        let pairs = crate::data::build_pairs_from_qa(&task.items).unwrap();
        let scores = momentum::localize(
            &task.model,
            &task.tokenizer,
            &pairs[..8],
            &[task.target_au.site],
        )
        .unwrap();
        let result = sweep(
            &task.model,
            &task.tokenizer,
            &scores,
            &task.items[..4],
            &[4],
            &[10.0],
            1,
            "val",
        )
        .unwrap();
        assert_eq!(result.grid.len(), 1);
        assert_eq!(result.best.k, 4);
        assert_eq!(result.best.alpha, 10.0);
        assert_eq!(result.best.accuracy, result.grid[0].accuracy);
    }

    #[test]
    fn sweep_tie_prefers_smaller_cell() {
        let task = gen_synthetic_task(&SyntheticSpec::with_seed(8)).unwrap();
        let pairs = crate::data::build_pairs_from_qa(&task.items).unwrap();
        let scores = momentum::localize(
            &task.model,
            &task.tokenizer,
            &pairs[..8],
            &[task.target_au.site],
        )
        .unwrap();
        let result = sweep(
            &task.model,
            &task.tokenizer,
            &scores,
            &task.items[..4],
            &[2, 4],
            &[8.0, 10.0],
            1,
            "val",
        )
        .unwrap();
        let best_acc = result.best.accuracy;
        for cell in &result.grid {
            if cell.accuracy == best_acc {
                assert!(result.best.k <= cell.k);
                if result.best.k == cell.k {
                    assert!(result.best.alpha <= cell.alpha);
                }
            }
        }
    }

    #[test]
    fn compare_modes_shapes_and_vanilla() {
        let task = gen_synthetic_task(&SyntheticSpec::with_seed(10)).unwrap();
        let pairs = crate::data::build_pairs_from_qa(&task.items).unwrap();
        let sites = alloc::vec![
            crate::model::HookSite::ffn_hidden(0),
            crate::model::HookSite::ffn_hidden(1),
        ];
        let cfg = CompareConfig {
            sites,
            k: 4,
            alpha: 10.0,
            seed: 1,
            fixed_gamma: 5.0,
            suppress_fraction: 0.25,
            suppress_factor: 0.5,
            block_site: task.target_au.site,
            max_new: 1,
            dataset_id: "synj".into(),
        };
        let reports = compare_modes(
            &task.model,
            &task.tokenizer,
            &pairs[..10],
            &task.items[..6],
            &cfg,
        )
        .unwrap();
        let modes: Vec<&str> = reports.iter().map(|r| r.provenance.mode.as_str()).collect();
        assert_eq!(
            modes,
            alloc::vec![
                "vanilla",
                "austeer",
                "random",
                "act_diff",
                "fixed_vector",
                "fixed_strength",
                "suppression",
                "block_mean_diff",
                "steer_all"
            ]
        );
        // Vanilla matches a direct evaluate with no plan.
        let direct = evaluate(&task.model, &task.tokenizer, None, &task.items[..6], "synj", 1)
            .unwrap();
        assert_eq!(reports[0], direct);
    }
}
