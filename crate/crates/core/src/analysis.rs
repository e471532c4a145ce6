//! Mechanism studies: KL convergence under increasing steering strength,
//! pairwise divergence between AUs, steered top-k token tables, and a
//! first-order Taylor check of momentum causality.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::audecomp::AUId;
use crate::data::{ContrastivePair, Tokenizer};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::momentum::pair_momentum;
use crate::numerics::{kl_divergence, softmax, Vector};
use crate::steering::{PlanProvenance, SteeringEntry, SteeringPlan};

/// Default strength grid: log-spaced from 10 to 100000.
pub const DEFAULT_STRENGTHS: [f64; 5] = [10.0, 100.0, 1_000.0, 10_000.0, 100_000.0];

/// What a divergence series tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesSubject {
    Single(AUId),
    Pair(AUId, AUId),
}

/// KL values along an ascending strength grid.
#[derive(Debug, Clone)]
pub struct DivergenceSeries {
    pub subject: SeriesSubject,
    pub strengths: Vec<f64>,
    pub values: Vec<f64>,
    /// True when values were divided by the first-grid-point value.
    pub normalized: bool,
}

/// Top-k next-token table under a steering plan.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenTable {
    pub prompt_id: String,
    pub plan_label: String,
    pub k: usize,
    /// (token string, probability), descending by probability.
    pub rows: Vec<(String, f64)>,
}

/// First-order Taylor comparison: observed logit change vs the
/// derivative-times-momentum prediction, at the last position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorRecord {
    pub delta_logits_norm: f64,
    pub predicted_norm: f64,
    pub relative_error: f64,
}

fn single_entry_plan(au: AUId, gamma: f32, label: &str) -> Result<SteeringPlan> {
    SteeringPlan::new(
        label,
        PlanProvenance::new(label),
        vec![SteeringEntry::multiplicative(au, gamma)],
    )
}

fn additive_plan(au: AUId, delta: f32, label: &str) -> Result<SteeringPlan> {
    SteeringPlan::new(
        label,
        PlanProvenance::new(label),
        vec![SteeringEntry::additive(au, delta)],
    )
}

fn last_row(model: &Model, tokens: &[u32], plan: Option<&SteeringPlan>) -> Result<Vector> {
    let logits = model.forward(tokens, plan)?;
    Ok(Vector::new(logits.row(logits.rows() - 1).to_vec())?)
}

fn check_strengths(strengths: &[f64]) -> Result<()> {
    if strengths.is_empty() {
        return Err(Error::Param("strength grid is empty".into()));
    }
    for w in strengths.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Param(format!(
                "strengths must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if strengths.iter().any(|s| !s.is_finite()) {
        return Err(Error::Param("strengths must be finite".into()));
    }
    Ok(())
}

/// Steer one AU with gamma = s for every s in the grid and measure
/// `KL(dist_s || dist_smax)`. When the first value exceeds 1e-9 the series
/// is divided by it (so it starts at 1), mirroring the convergence view.
pub fn kl_convergence(
    model: &Model,
    tokens: &[u32],
    au: AUId,
    strengths: &[f64],
) -> Result<DivergenceSeries> {
    check_strengths(strengths)?;
    au.validate(model.config())?;
    let s_max = *strengths.last().expect("nonempty");
    let plan_max = single_entry_plan(au, s_max as f32, "kl_convergence")?;
    let dist_max = softmax(&last_row(model, tokens, Some(&plan_max))?);

    let mut values = Vec::with_capacity(strengths.len());
    for &s in strengths {
        let plan = single_entry_plan(au, s as f32, "kl_convergence")?;
        let dist = softmax(&last_row(model, tokens, Some(&plan))?);
        values.push(kl_divergence(&dist, &dist_max)?.max(0.0));
    }
    let normalized = values[0] > 1e-9;
    if normalized {
        let first = values[0];
        for v in values.iter_mut() {
            *v /= first;
        }
    }
    Ok(DivergenceSeries {
        subject: SeriesSubject::Single(au),
        strengths: strengths.to_vec(),
        values,
        normalized,
    })
}

/// `KL(dist steered by au_a at s || dist steered by au_b at s)` per strength.
/// KL is not symmetric; argument order is (a, b).
pub fn pairwise_divergence(
    model: &Model,
    tokens: &[u32],
    au_a: AUId,
    au_b: AUId,
    strengths: &[f64],
) -> Result<DivergenceSeries> {
    check_strengths(strengths)?;
    au_a.validate(model.config())?;
    au_b.validate(model.config())?;
    let mut values = Vec::with_capacity(strengths.len());
    for &s in strengths {
        let plan_a = single_entry_plan(au_a, s as f32, "pairwise_a")?;
        let plan_b = single_entry_plan(au_b, s as f32, "pairwise_b")?;
        let dist_a = softmax(&last_row(model, tokens, Some(&plan_a))?);
        let dist_b = softmax(&last_row(model, tokens, Some(&plan_b))?);
        values.push(kl_divergence(&dist_a, &dist_b)?.max(0.0));
    }
    Ok(DivergenceSeries {
        subject: SeriesSubject::Pair(au_a, au_b),
        strengths: strengths.to_vec(),
        values,
        normalized: false,
    })
}

/// Top-k next-token distribution at the last position under a plan.
/// Ties in probability resolve to the lower token id.
pub fn steered_topk(
    model: &Model,
    tokenizer: &Tokenizer,
    prompt_id: &str,
    tokens: &[u32],
    plan: &SteeringPlan,
    k: usize,
) -> Result<TokenTable> {
    let vocab = model.config().vocab_size;
    if k == 0 || k > vocab {
        return Err(Error::Param(format!(
            "topk k {k} out of range 1..={vocab}"
        )));
    }
    let dist = softmax(&last_row(model, tokens, Some(plan))?);
    let mut indexed: Vec<(usize, f32)> = dist
        .probs()
        .as_slice()
        .iter()
        .copied()
        .enumerate()
        .collect();
    indexed.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let rows = indexed
        .into_iter()
        .take(k)
        .map(|(id, p)| {
            let word = tokenizer
                .token_string(id as u32)
                .map(String::from)
                .unwrap_or_else(|| format!("<{id}>"));
            (word, p as f64)
        })
        .collect();
    Ok(TokenTable {
        prompt_id: prompt_id.into(),
        plan_label: plan.label().into(),
        k,
        rows,
    })
}

/// Core of the Taylor check with an explicit surgical step: estimate
/// `d(logits)/d(x_i)` by central differences with additive +-epsilon, predict
/// `delta = derivative * step`, and compare with the observed change from
/// additively shifting the coefficient by `step`.
pub fn taylor_residual(
    model: &Model,
    tokens: &[u32],
    au: AUId,
    step: f64,
    epsilon: f64,
) -> Result<TaylorRecord> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Param(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    au.validate(model.config())?;
    if !step.is_finite() {
        return Err(Error::Param("taylor step must be finite".into()));
    }

    let plus = last_row(
        model,
        tokens,
        Some(&additive_plan(au, epsilon as f32, "taylor_plus")?),
    )?;
    let minus = last_row(
        model,
        tokens,
        Some(&additive_plan(au, -(epsilon as f32), "taylor_minus")?),
    )?;
    if plus
        .as_slice()
        .iter()
        .zip(minus.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits())
    {
        return Err(Error::Resolution(format!(
            "epsilon {epsilon} too small: perturbed forwards are bitwise identical"
        )));
    }
    let derivative: Vec<f64> = plus
        .as_slice()
        .iter()
        .zip(minus.as_slice())
        .map(|(&p, &m)| (p as f64 - m as f64) / (2.0 * epsilon))
        .collect();

    let base = last_row(model, tokens, None)?;
    let stepped = last_row(
        model,
        tokens,
        Some(&additive_plan(au, step as f32, "taylor_step")?),
    )?;
    let observed: Vec<f64> = stepped
        .as_slice()
        .iter()
        .zip(base.as_slice())
        .map(|(&s, &b)| s as f64 - b as f64)
        .collect();
    let predicted: Vec<f64> = derivative.iter().map(|d| d * step).collect();

    let observed_norm = l2(&observed);
    let predicted_norm = l2(&predicted);
    let residual: Vec<f64> = observed
        .iter()
        .zip(&predicted)
        .map(|(o, p)| o - p)
        .collect();
    let relative_error = l2(&residual) / observed_norm.max(1e-12);
    Ok(TaylorRecord {
        delta_logits_norm: observed_norm,
        predicted_norm,
        relative_error,
    })
}

/// Taylor check on a contrastive pair: the surgical step is the pair's
/// momentum at `au`, and the replayed forwards run on the negative sample.
pub fn taylor_check(
    model: &Model,
    tokenizer: &Tokenizer,
    pair: &ContrastivePair,
    au: AUId,
    epsilon: f64,
) -> Result<TaylorRecord> {
    au.validate(model.config())?;
    let tok_pos = tokenizer.tokenize(&pair.positive);
    let tok_neg = tokenizer.tokenize(&pair.negative);
    if tok_pos.is_empty() || tok_neg.is_empty() {
        return Err(Error::Data(format!(
            "pair `{}`: text tokenizes to zero tokens",
            pair.id
        )));
    }
    let sites = [au.site];
    let trace_pos = model.record_activations(&tok_pos, &sites)?;
    let trace_neg = model.record_activations(&tok_neg, &sites)?;
    let m = pair_momentum(&trace_pos, &trace_neg, &au.site)?.get(au.dim);
    if m == 0.0 {
        // Nothing to predict; both sides are exactly zero.
        return Ok(TaylorRecord {
            delta_logits_norm: 0.0,
            predicted_norm: 0.0,
            relative_error: 0.0,
        });
    }
    taylor_residual(model, &tok_neg, au, m as f64, epsilon)
}

fn l2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|&x| x * x).sum())
}
