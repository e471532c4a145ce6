//! Steering plans: which AUs to intervene on and how.
//!
//! A plan is an immutable set of per-AU entries, either multiplicative
//! (`x_hat = x * (1 + gamma)`, which scales the current activation and
//! preserves its sign) or additive (`x_hat = x + delta`, a constant shift).
//! Plans are applied at every token position of a forward pass.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audecomp::AUId;
use crate::data::{ContrastivePair, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{HookSite, Model, ModelConfig};
use crate::momentum::{self, AUScore, Direction, MomentumStats};
use crate::numerics::Vector;

/// How a single AU is steered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SteerAction {
    /// `x_hat = x * (1 + gamma)`.
    Multiplicative { gamma: f32 },
    /// `x_hat = x + delta`.
    Additive { delta: f32 },
}

impl SteerAction {
    pub fn value(&self) -> f32 {
        match self {
            SteerAction::Multiplicative { gamma } => *gamma,
            SteerAction::Additive { delta } => *delta,
        }
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

/// One steering intervention on one AU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringEntry {
    pub au: AUId,
    pub action: SteerAction,
}

impl SteeringEntry {
    pub fn multiplicative(au: AUId, gamma: f32) -> Self {
        Self {
            au,
            action: SteerAction::Multiplicative { gamma },
        }
    }

    pub fn additive(au: AUId, delta: f32) -> Self {
        Self {
            au,
            action: SteerAction::Additive { delta },
        }
    }
}

/// How a plan was built; carried into reports for reproducibility.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanProvenance {
    pub strategy: String,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
}

impl PlanProvenance {
    pub fn new(strategy: &str) -> Self {
        Self {
            strategy: strategy.into(),
            k: None,
            alpha: None,
            seed: None,
        }
    }
}

/// Per-site view of an entry, used inside the forward pass.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SiteEntry {
    pub dim: usize,
    pub action: SteerAction,
}

/// An immutable set of steering entries, indexed by hook site.
#[derive(Debug, Clone)]
pub struct SteeringPlan {
    label: String,
    provenance: PlanProvenance,
    entries: Vec<SteeringEntry>,
    by_site: BTreeMap<HookSite, Vec<SiteEntry>>,
}

impl SteeringPlan {
    /// Build a plan. Rejects duplicate AUIds and non-finite values.
    pub fn new(
        label: impl Into<String>,
        provenance: PlanProvenance,
        entries: Vec<SteeringEntry>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut by_site: BTreeMap<HookSite, Vec<SiteEntry>> = BTreeMap::new();
        for (i, entry) in entries.iter().enumerate() {
            if !entry.action.is_finite() {
                return Err(Error::Param(format!(
                    "entry {i} ({}) has a non-finite steering value",
                    entry.au
                )));
            }
            if !seen.insert(entry.au) {
                return Err(Error::Param(format!(
                    "entry {i} duplicates AU {}",
                    entry.au
                )));
            }
            by_site.entry(entry.au.site).or_default().push(SiteEntry {
                dim: entry.au.dim,
                action: entry.action,
            });
        }
        Ok(Self {
            label: label.into(),
            provenance,
            entries,
            by_site,
        })
    }

    /// A plan with no entries; forwarding with it is bitwise identical to
    /// forwarding with no plan.
    pub fn empty(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            provenance: PlanProvenance::new("empty"),
            entries: Vec::new(),
            by_site: BTreeMap::new(),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn provenance(&self) -> &PlanProvenance {
        &self.provenance
    }

    pub fn entries(&self) -> &[SteeringEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replace label and strategy, keeping entries (used for control modes).
    pub fn relabel(mut self, label: impl Into<String>, strategy: &str) -> Self {
        self.label = label.into();
        self.provenance.strategy = strategy.into();
        self
    }

    pub(crate) fn site_entries(&self, site: &HookSite) -> Option<&[SiteEntry]> {
        self.by_site.get(site).map(|v| v.as_slice())
    }

    /// Check that every entry addresses a valid AU of `config`.
    pub fn validate_for(&self, config: &ModelConfig) -> Result<()> {
        for entry in &self.entries {
            entry.au.validate(config)?;
        }
        Ok(())
    }
}

/// AUSteer: top-k AUs by discriminative score, with adaptive strengths
/// `gamma = +alpha * r_pos` for promoting AUs and `-alpha * r_neg` for
/// suppressing ones.
pub fn build_austeer(scores: &[AUScore], k: usize, alpha: f64) -> Result<SteeringPlan> {
    if scores.is_empty() {
        return Err(Error::Param("build_austeer: empty scores".into()));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Param(format!(
            "build_austeer: alpha must be positive and finite, got {alpha}"
        )));
    }
    let selected = momentum::top_k(scores, k)?;
    let entries = selected
        .iter()
        .map(|s| SteeringEntry::multiplicative(s.au, austeer_gamma(s, alpha)))
        .collect();
    let mut provenance = PlanProvenance::new("austeer");
    provenance.k = Some(k);
    provenance.alpha = Some(alpha);
    SteeringPlan::new("austeer", provenance, entries)
}

fn austeer_gamma(score: &AUScore, alpha: f64) -> f32 {
    match score.direction {
        Direction::Promote => (alpha * score.r_pos) as f32,
        Direction::Suppress => (-alpha * score.r_neg) as f32,
    }
}

/// Random localization control: k distinct AUs sampled uniformly from the
/// given sites, all promoted with `gamma = +alpha` (random localization has
/// no direction signal).
pub fn build_random(
    model: &Model,
    sites: &[HookSite],
    k: usize,
    alpha: f64,
    seed: u64,
) -> Result<SteeringPlan> {
    if k == 0 {
        return Err(Error::Param("build_random: k must be >= 1".into()));
    }
    let population = site_population(model.config(), sites)?;
    if k > population.len() {
        return Err(Error::Param(format!(
            "build_random: k {k} exceeds AU population {}",
            population.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<AUId> = rand::seq::index::sample(&mut rng, population.len(), k)
        .iter()
        .map(|i| population[i])
        .collect();
    picked.sort();
    let entries = picked
        .into_iter()
        .map(|au| SteeringEntry::multiplicative(au, alpha as f32))
        .collect();
    let mut provenance = PlanProvenance::new("random");
    provenance.k = Some(k);
    provenance.alpha = Some(alpha);
    provenance.seed = Some(seed);
    SteeringPlan::new("random", provenance, entries)
}

/// Fixed steering vector control: top-k AUs shifted by their mean momentum
/// (additive), replacing the adaptive `gamma * x` update.
pub fn build_fixed_vector(
    scores: &[AUScore],
    stats: &[MomentumStats],
    k: usize,
) -> Result<SteeringPlan> {
    let by_au: BTreeMap<AUId, &MomentumStats> = stats.iter().map(|s| (s.au, s)).collect();
    let selected = momentum::top_k(scores, k)?;
    let mut entries = Vec::with_capacity(selected.len());
    for s in &selected {
        let stat = by_au.get(&s.au).ok_or_else(|| {
            Error::Param(format!("build_fixed_vector: no stats for AU {}", s.au))
        })?;
        entries.push(SteeringEntry::additive(s.au, stat.mean_momentum()? as f32));
    }
    let mut provenance = PlanProvenance::new("fixed_vector");
    provenance.k = Some(k);
    SteeringPlan::new("fixed_vector", provenance, entries)
}

/// Fixed strength control: top-k AUs with the same magnitude, signed by
/// direction (`+|gamma|` for promote, `-|gamma|` for suppress).
pub fn build_fixed_strength(scores: &[AUScore], k: usize, gamma: f64) -> Result<SteeringPlan> {
    if !gamma.is_finite() {
        return Err(Error::Param("build_fixed_strength: gamma must be finite".into()));
    }
    let magnitude = gamma.abs() as f32;
    let selected = momentum::top_k(scores, k)?;
    let entries = selected
        .iter()
        .map(|s| {
            let signed = match s.direction {
                Direction::Promote => magnitude,
                Direction::Suppress => -magnitude,
            };
            SteeringEntry::multiplicative(s.au, signed)
        })
        .collect();
    let mut provenance = PlanProvenance::new("fixed_strength");
    provenance.k = Some(k);
    provenance.alpha = Some(gamma.abs());
    SteeringPlan::new("fixed_strength", provenance, entries)
}

/// Suppression variant: scale the lowest-scoring `floor(fraction * total)`
/// AUs by `factor`, i.e. `gamma = factor - 1`.
pub fn build_suppression(
    scores: &[AUScore],
    fraction: f64,
    factor: f64,
) -> Result<SteeringPlan> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Param(format!(
            "build_suppression: fraction must be in (0, 1], got {fraction}"
        )));
    }
    if !(factor > 0.0 && factor < 1.0) {
        return Err(Error::Param(format!(
            "build_suppression: factor must be in (0, 1), got {factor}"
        )));
    }
    let ranked = momentum::rank_scores(scores);
    let count = (fraction * ranked.len() as f64) as usize;
    let gamma = (factor - 1.0) as f32;
    let entries = ranked
        .iter()
        .rev()
        .take(count)
        .map(|s| SteeringEntry::multiplicative(s.au, gamma))
        .collect();
    let mut provenance = PlanProvenance::new("suppression");
    provenance.alpha = Some(factor);
    SteeringPlan::new("suppression", provenance, entries)
}

/// Block-level mean-difference baseline: one additive entry for every
/// dimension of `site`, shifted by that dimension's mean momentum over the
/// pairs. This is the full-block constant-vector intervention prior methods
/// use.
pub fn build_block_mean_diff(
    model: &Model,
    tokenizer: &Tokenizer,
    pairs: &[ContrastivePair],
    site: HookSite,
) -> Result<SteeringPlan> {
    let stats = momentum::localize_stats(model, tokenizer, pairs, &[site])?;
    let mut entries = Vec::with_capacity(stats.len());
    for stat in &stats {
        entries.push(SteeringEntry::additive(stat.au, stat.mean_momentum()? as f32));
    }
    let provenance = PlanProvenance::new("block_mean_diff");
    SteeringPlan::new("block_mean_diff", provenance, entries)
}

/// Apply entries (all addressing dimensions of `x`) and return the steered
/// vector. Untouched dimensions are bitwise unchanged.
pub fn apply_steering(x: &Vector, entries: &[SteeringEntry]) -> Result<Vector> {
    let mut out = x.as_slice().to_vec();
    let site_entries: Vec<SiteEntry> = entries
        .iter()
        .map(|e| SiteEntry {
            dim: e.au.dim,
            action: e.action,
        })
        .collect();
    apply_entries_slice(&mut out, &site_entries)?;
    Ok(Vector::new(out)?)
}

pub(crate) fn apply_entries_slice(x: &mut [f32], entries: &[SiteEntry]) -> Result<()> {
    for entry in entries {
        if entry.dim >= x.len() {
            return Err(Error::Param(format!(
                "steering dim {} out of range for vector of dim {}",
                entry.dim,
                x.len()
            )));
        }
        match entry.action {
            SteerAction::Multiplicative { gamma } => x[entry.dim] *= 1.0 + gamma,
            SteerAction::Additive { delta } => x[entry.dim] += delta,
        }
    }
    Ok(())
}

fn site_population(config: &ModelConfig, sites: &[HookSite]) -> Result<Vec<AUId>> {
    let mut dedup = BTreeSet::new();
    for site in sites {
        site.validate(config)?;
        dedup.insert(*site);
    }
    let mut population = Vec::new();
    for site in dedup {
        for dim in 0..site.dim(config) {
            population.push(AUId::new(site, dim));
        }
    }
    Ok(population)
}
