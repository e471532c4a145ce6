//! Activation momentum: per-pair coefficient differences, streaming sign
//! counts, discriminative scores, and global top-k localization.
//!
//! For contrastive pair `j` and AU `i`, the momentum is
//! `m_i^j = x_i^{j,pos} - x_i^{j,neg}`. Counting strict signs over `N` pairs
//! gives `r_pos = (1/N) sum 1(m > 0)` and `r_neg = (1/N) sum 1(m < 0)`; the
//! discriminative score is `s = max(r_pos, r_neg)`. Sign counting is
//! scale-invariant, which is what makes scores comparable across layers.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::audecomp::AUId;
use crate::data::{ContrastivePair, Tokenizer};
use crate::error::{Error, Result};
use crate::model::{ActivationTrace, HookSite, Model};
use crate::numerics::Vector;

/// Whether an AU's activation is consistently higher (promote) or lower
/// (suppress) on positive samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Promote,
    Suppress,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Promote => "promote",
            Direction::Suppress => "suppress",
        }
    }
}

/// Streaming per-AU momentum counts. Merging two stats sums their fields;
/// counts merge exactly, sums are f64 accumulations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumStats {
    pub au: AUId,
    pub n_pos: u64,
    pub n_neg: u64,
    pub n_zero: u64,
    pub n_total: u64,
    pub sum_m: f64,
    pub sum_abs_m: f64,
}

impl MomentumStats {
    pub fn new(au: AUId) -> Self {
        Self {
            au,
            n_pos: 0,
            n_neg: 0,
            n_zero: 0,
            n_total: 0,
            sum_m: 0.0,
            sum_abs_m: 0.0,
        }
    }

    /// Count one momentum. Exactly one of the three counters is incremented,
    /// using strict comparison against exact 0.0.
    pub fn accumulate(&mut self, m: f32) -> Result<()> {
        if !m.is_finite() {
            return Err(Error::Data(format!(
                "non-finite momentum {m} for AU {}",
                self.au
            )));
        }
        if m > 0.0 {
            self.n_pos += 1;
        } else if m < 0.0 {
            self.n_neg += 1;
        } else {
            self.n_zero += 1;
        }
        self.n_total += 1;
        self.sum_m += m as f64;
        self.sum_abs_m += libm::fabs(m as f64);
        Ok(())
    }

    /// Associative merge; both sides must address the same AU.
    pub fn merge(&mut self, other: &MomentumStats) -> Result<()> {
        if self.au != other.au {
            return Err(Error::Param(format!(
                "cannot merge stats for {} into {}",
                other.au, self.au
            )));
        }
        self.n_pos += other.n_pos;
        self.n_neg += other.n_neg;
        self.n_zero += other.n_zero;
        self.n_total += other.n_total;
        self.sum_m += other.sum_m;
        self.sum_abs_m += other.sum_abs_m;
        Ok(())
    }

    pub fn mean_momentum(&self) -> Result<f64> {
        if self.n_total == 0 {
            return Err(Error::Data(format!("empty stats for AU {}", self.au)));
        }
        Ok(self.sum_m / self.n_total as f64)
    }

    /// Ratios, score, and direction per Eq.-2-style counting. Ties between
    /// `r_pos` and `r_neg` resolve to suppress (the non-strict branch).
    pub fn finalize(&self) -> Result<AUScore> {
        if self.n_total == 0 {
            return Err(Error::Data(format!("empty stats for AU {}", self.au)));
        }
        let n = self.n_total as f64;
        let r_pos = self.n_pos as f64 / n;
        let r_neg = self.n_neg as f64 / n;
        let direction = if r_pos > r_neg {
            Direction::Promote
        } else {
            Direction::Suppress
        };
        Ok(AUScore {
            au: self.au,
            r_pos,
            r_neg,
            score: r_pos.max(r_neg),
            direction,
            mean_abs_m: self.sum_abs_m / n,
        })
    }
}

/// Finalized discriminative score of one AU.
#[derive(Debug, Clone, PartialEq)]
pub struct AUScore {
    pub au: AUId,
    pub r_pos: f64,
    pub r_neg: f64,
    pub score: f64,
    pub direction: Direction,
    pub mean_abs_m: f64,
}

/// Elementwise momentum vector for one pair at one site.
pub fn pair_momentum(
    trace_pos: &ActivationTrace,
    trace_neg: &ActivationTrace,
    site: &HookSite,
) -> Result<Vector> {
    let pos = trace_pos
        .get(site)
        .ok_or_else(|| Error::Data(format!("site {site} absent from positive trace")))?;
    let neg = trace_neg
        .get(site)
        .ok_or_else(|| Error::Data(format!("site {site} absent from negative trace")))?;
    if pos.dim() != neg.dim() {
        return Err(Error::Shape(format!(
            "momentum at {site}: positive dim {} vs negative dim {}",
            pos.dim(),
            neg.dim()
        )));
    }
    Vector::new(
        pos.as_slice()
            .iter()
            .zip(neg.as_slice())
            .map(|(&p, &n)| p - n)
            .collect(),
    )
}

/// Record both traces of one pair and return the momentum vector per site.
/// This is the per-pair unit of work `localize` accumulates over; callers
/// may fan it out over pairs and feed results back in pair order.
pub fn pair_site_momenta(
    model: &Model,
    tokenizer: &Tokenizer,
    pair: &ContrastivePair,
    sites: &[HookSite],
) -> Result<Vec<(HookSite, Vector)>> {
    let tok_pos = tokenize_checked(tokenizer, &pair.positive, &pair.id, "positive")?;
    let tok_neg = tokenize_checked(tokenizer, &pair.negative, &pair.id, "negative")?;
    let trace_pos = model
        .record_activations(&tok_pos, sites)
        .map_err(|e| Error::Data(format!("pair `{}` (positive): {e}", pair.id)))?;
    let trace_neg = model
        .record_activations(&tok_neg, sites)
        .map_err(|e| Error::Data(format!("pair `{}` (negative): {e}", pair.id)))?;
    let mut out = Vec::with_capacity(sites.len());
    for site in sites {
        out.push((*site, pair_momentum(&trace_pos, &trace_neg, site)?));
    }
    Ok(out)
}

fn tokenize_checked(
    tokenizer: &Tokenizer,
    text: &str,
    pair_id: &str,
    side: &str,
) -> Result<Vec<u32>> {
    let tokens = tokenizer.tokenize(text);
    if tokens.is_empty() {
        return Err(Error::Data(format!(
            "pair `{pair_id}`: {side} text tokenizes to zero tokens"
        )));
    }
    Ok(tokens)
}

/// Streaming counter over every AU of a canonical site set. Feeding it
/// per-pair momenta in pair order reproduces [`localize_stats`] exactly, so
/// callers may compute the momenta for different pairs concurrently and
/// accumulate the results in order.
pub struct MomentumAccumulator {
    sites: Vec<HookSite>,
    offsets: Vec<usize>,
    stats: Vec<MomentumStats>,
}

impl MomentumAccumulator {
    pub fn new(model: &Model, sites: &[HookSite]) -> Result<Self> {
        let sites = canonical_sites(model, sites)?;
        let config = model.config();
        let mut stats: Vec<MomentumStats> = Vec::new();
        let mut offsets: Vec<usize> = Vec::with_capacity(sites.len());
        for site in &sites {
            offsets.push(stats.len());
            for dim in 0..site.dim(config) {
                stats.push(MomentumStats::new(AUId::new(*site, dim)));
            }
        }
        Ok(Self {
            sites,
            offsets,
            stats,
        })
    }

    /// The canonical site order momenta must be supplied in.
    pub fn sites(&self) -> &[HookSite] {
        &self.sites
    }

    pub fn add_pair_momenta(&mut self, momenta: &[(HookSite, Vector)]) -> Result<()> {
        if momenta.len() != self.sites.len() {
            return Err(Error::Shape(format!(
                "expected momenta for {} sites, got {}",
                self.sites.len(),
                momenta.len()
            )));
        }
        for (si, (site, m)) in momenta.iter().enumerate() {
            if *site != self.sites[si] {
                return Err(Error::Data(format!(
                    "momenta out of canonical order: got {site}, expected {}",
                    self.sites[si]
                )));
            }
            let base = self.offsets[si];
            for (dim, &value) in m.as_slice().iter().enumerate() {
                self.stats[base + dim].accumulate(value)?;
            }
        }
        Ok(())
    }

    pub fn finish(self) -> Vec<MomentumStats> {
        self.stats
    }
}

/// Streaming momentum stats for every AU of every requested site, in
/// canonical (site, dim) order.
pub fn localize_stats(
    model: &Model,
    tokenizer: &Tokenizer,
    pairs: &[ContrastivePair],
    sites: &[HookSite],
) -> Result<Vec<MomentumStats>> {
    if pairs.is_empty() {
        return Err(Error::Data("localize: no contrastive pairs".into()));
    }
    let mut acc = MomentumAccumulator::new(model, sites)?;
    let canonical = acc.sites().to_vec();
    for pair in pairs {
        let momenta = pair_site_momenta(model, tokenizer, pair, &canonical)?;
        acc.add_pair_momenta(&momenta)?;
    }
    Ok(acc.finish())
}

/// One AUScore per (site, dim), canonical order.
pub fn localize(
    model: &Model,
    tokenizer: &Tokenizer,
    pairs: &[ContrastivePair],
    sites: &[HookSite],
) -> Result<Vec<AUScore>> {
    localize_stats(model, tokenizer, pairs, sites)?
        .iter()
        .map(MomentumStats::finalize)
        .collect()
}

fn canonical_sites(model: &Model, sites: &[HookSite]) -> Result<Vec<HookSite>> {
    if sites.is_empty() {
        return Err(Error::Param("localize: no sites requested".into()));
    }
    let mut set = BTreeSet::new();
    for site in sites {
        site.validate(model.config())?;
        set.insert(*site);
    }
    Ok(set.into_iter().collect())
}

/// Ranking order: score desc, mean |m| desc, then (layer, kind, head, dim)
/// ascending. Fully deterministic.
pub fn rank_cmp(a: &AUScore, b: &AUScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.mean_abs_m.total_cmp(&a.mean_abs_m))
        .then_with(|| a.au.cmp(&b.au))
}

/// All scores sorted by [`rank_cmp`].
pub fn rank_scores(scores: &[AUScore]) -> Vec<AUScore> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(rank_cmp);
    sorted
}

/// The top `min(k, len)` scores in rank order.
pub fn top_k(scores: &[AUScore], k: usize) -> Result<Vec<AUScore>> {
    if k == 0 {
        return Err(Error::Param("top_k: k must be >= 1".into()));
    }
    let mut sorted = rank_scores(scores);
    sorted.truncate(k);
    Ok(sorted)
}
