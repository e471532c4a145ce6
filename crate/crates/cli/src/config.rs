//! Run configuration: one JSON file, flag overrides win.
//!
//! Every command reads the same schema and uses the sections it needs. All
//! randomness flows from the single top-level `seed`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use austeer_core::audecomp::AUId;
use austeer_core::data::{
    build_pairs_from_qa, gen_synthetic_task, ContrastivePair, QAItem, SyntheticSpec, Tokenizer,
};
use austeer_core::model::{HookSite, Model, ModelConfig, SiteKind};

use crate::error::{CliError, Result};
use crate::formats::wire::{AuWire, SiteWire};
use crate::formats::{container, pairs as pairs_fmt, tokenizer as tok_fmt};

fn default_budget() -> usize {
    100
}
fn default_max_new() -> usize {
    1
}
fn default_jobs() -> usize {
    1
}
fn default_k() -> usize {
    8
}
fn default_alpha() -> f64 {
    10.0
}
fn default_mode() -> String {
    "austeer".to_string()
}
fn default_gamma() -> f64 {
    5.0
}
fn default_fraction() -> f64 {
    0.5
}
fn default_factor() -> f64 {
    0.5
}
fn default_vocab() -> usize {
    64
}
fn default_n_items() -> usize {
    60
}
fn default_target() -> u32 {
    7
}
fn default_distractor() -> u32 {
    9
}
fn default_planted_site() -> SiteWire {
    SiteWire {
        layer: 1,
        kind: "ffn_hidden".to_string(),
        head: None,
    }
}
fn default_planted_dim() -> usize {
    5
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_topk() -> usize {
    5
}
fn default_k_grid() -> Vec<usize> {
    vec![1, 2, 4, 8]
}
fn default_alpha_grid() -> Vec<f64> {
    vec![1.0, 4.0, 10.0, 20.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWire {
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    #[serde(default = "default_n_items")]
    pub n_items: usize,
    #[serde(default = "default_target")]
    pub target_token: u32,
    #[serde(default = "default_distractor")]
    pub distractor_token: u32,
    #[serde(default = "default_planted_site")]
    pub planted_site: SiteWire,
    #[serde(default = "default_planted_dim")]
    pub planted_dim: usize,
}

impl Default for SyntheticWire {
    fn default() -> Self {
        Self {
            vocab_size: default_vocab(),
            n_items: default_n_items(),
            target_token: default_target(),
            distractor_token: default_distractor(),
            planted_site: default_planted_site(),
            planted_dim: default_planted_dim(),
        }
    }
}

impl SyntheticWire {
    pub fn to_spec(&self, seed: u64) -> Result<SyntheticSpec> {
        Ok(SyntheticSpec {
            seed,
            vocab_size: self.vocab_size,
            n_items: self.n_items,
            target_token: self.target_token,
            distractor_token: self.distractor_token,
            planted_site: self.planted_site.to_site().map_err(|e| CliError::config(e))?,
            planted_dim: self.planted_dim,
        })
    }
}

/// Selects hook sites; omitted layer (or head) means "all".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSelector {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyConfig {
    #[serde(default = "default_mode")]
    pub mode: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fixed-strength control magnitude.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Suppression control: share of lowest-scoring AUs.
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    /// Suppression control: scale factor in (0, 1).
    #[serde(default = "default_factor")]
    pub factor: f64,
    /// Site for the block mean-difference baseline (defaults to the last
    /// layer's FFN hidden).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_site: Option<SiteWire>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            k: default_k(),
            alpha: default_alpha(),
            gamma: default_gamma(),
            fraction: default_fraction(),
            factor: default_factor(),
            block_site: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_alpha_grid")]
    pub alpha_grid: Vec<f64>,
    /// Evaluate grid cells on only the first N items.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_size: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k_grid: default_k_grid(),
            alpha_grid: default_alpha_grid(),
            val_size: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Prompt text; when absent, the question template of `item_index`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default)]
    pub item_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub au: Option<AuWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub au_b: Option<AuWire>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strengths: Option<Vec<f64>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_topk")]
    pub topk: usize,
    /// Pair used by the Taylor check.
    #[serde(default)]
    pub pair_index: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            prompt: None,
            item_index: 0,
            au: None,
            au_b: None,
            strengths: None,
            epsilon: default_epsilon(),
            topk: default_topk(),
            pair_index: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokenizer: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<PathBuf>,
    /// Generate inputs in-memory instead of (or in addition to) paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticWire>,
    #[serde(default)]
    pub sites: Vec<SiteSelector>,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub analyze: Option<AnalyzeConfig>,
    /// Scores file consumed by `plan`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<PathBuf>,
    /// Stats file consumed by additive plan modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<PathBuf>,
    /// Plan file consumed by `eval` and `analyze topk`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_max_new")]
    pub max_new: usize,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: None,
            tokenizer: None,
            pairs: None,
            items: None,
            synthetic: None,
            sites: Vec::new(),
            strategy: StrategyConfig::default(),
            sweep: None,
            analyze: None,
            scores: None,
            stats: None,
            plan: None,
            seed: 0,
            budget: default_budget(),
            max_new: default_max_new(),
            jobs: default_jobs(),
            out: None,
        }
    }
}

/// Flag overrides; flags win over config fields.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub mode: Option<String>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub scores: Option<PathBuf>,
    pub plan: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("reading {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    pub fn apply_overrides(&mut self, ov: &Overrides) {
        if let Some(seed) = ov.seed {
            self.seed = seed;
        }
        if let Some(k) = ov.k {
            self.strategy.k = k;
        }
        if let Some(alpha) = ov.alpha {
            self.strategy.alpha = alpha;
        }
        if let Some(mode) = &ov.mode {
            self.strategy.mode = mode.clone();
        }
        if let Some(out) = &ov.out {
            self.out = Some(out.clone());
        }
        if let Some(jobs) = ov.jobs {
            self.jobs = jobs;
        }
        if let Some(scores) = &ov.scores {
            self.scores = Some(scores.clone());
        }
        if let Some(plan) = &ov.plan {
            self.plan = Some(plan.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy.k > self.budget {
            return Err(CliError::config(format!(
                "k {} exceeds budget {}",
                self.strategy.k, self.budget
            )));
        }
        if self.jobs == 0 {
            return Err(CliError::config("jobs must be >= 1"));
        }
        // Dataset paths are resolved by every command; command-specific
        // files (scores, stats, plan) are checked at their point of use.
        for (name, path) in [
            ("model", &self.model),
            ("tokenizer", &self.tokenizer),
            ("pairs", &self.pairs),
            ("items", &self.items),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(CliError::config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Hash of the resolved configuration, recorded in the manifest. The
    /// output directory and the jobs cap are excluded: neither affects any
    /// produced bytes.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.out = None;
        canon.jobs = 1;
        let text = serde_json::to_string(&canon).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::config("no output directory: set `out` or pass --out"))
    }
}

/// Inputs resolved from paths and/or the synthetic section. Explicit paths
/// win over generated pieces.
pub struct Inputs {
    pub model: Model,
    pub tokenizer: Tokenizer,
    pub pairs: Option<Vec<ContrastivePair>>,
    pub items: Option<Vec<QAItem>>,
    /// Planted AU addresses, when the inputs came from the generator.
    pub planted: Option<(AUId, AUId)>,
}

pub fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let task = match &cfg.synthetic {
        Some(wire) => Some(
            gen_synthetic_task(&wire.to_spec(cfg.seed)?)
                .map_err(|e| CliError::config(format!("synthetic spec: {e}")))?,
        ),
        None => None,
    };

    let model = match (&cfg.model, &task) {
        (Some(path), _) => container::load_model(path)?,
        (None, Some(task)) => task.model.clone(),
        (None, None) => {
            return Err(CliError::config(
                "no model: set `model` or a `synthetic` section",
            ))
        }
    };
    let tokenizer = match (&cfg.tokenizer, &task) {
        (Some(path), _) => tok_fmt::load_tokenizer(path)?,
        (None, Some(task)) => task.tokenizer.clone(),
        (None, None) => {
            return Err(CliError::config(
                "no tokenizer: set `tokenizer` or a `synthetic` section",
            ))
        }
    };
    let items = match (&cfg.items, &task) {
        (Some(path), _) => Some(pairs_fmt::load_items(path)?),
        (None, Some(task)) => Some(task.items.clone()),
        (None, None) => None,
    };
    let pairs = match (&cfg.pairs, &task) {
        (Some(path), _) => Some(pairs_fmt::load_pairs(path)?),
        (None, Some(task)) => Some(
            build_pairs_from_qa(&task.items)
                .map_err(|e| CliError::data(format!("building pairs: {e}")))?,
        ),
        (None, None) => None,
    };
    let planted = task.as_ref().map(|t| (t.target_au, t.distractor_au));
    Ok(Inputs {
        model,
        tokenizer,
        pairs,
        items,
        planted,
    })
}

/// Expand site selectors against a model config. With no selectors, all
/// FFN hidden sites are used.
pub fn expand_sites(selectors: &[SiteSelector], config: &ModelConfig) -> Result<Vec<HookSite>> {
    let mut sites = Vec::new();
    if selectors.is_empty() {
        for layer in 0..config.n_layers {
            sites.push(HookSite::ffn_hidden(layer));
        }
        return Ok(sites);
    }
    for sel in selectors {
        let kind: SiteKind = sel
            .kind
            .parse()
            .map_err(|e| CliError::config(format!("site selector: {e}")))?;
        let layers: Vec<usize> = match sel.layer {
            Some(l) => vec![l],
            None => (0..config.n_layers).collect(),
        };
        for layer in layers {
            match kind {
                SiteKind::AttnHeadOut => {
                    let heads: Vec<usize> = match sel.head {
                        Some(h) => vec![h],
                        None => (0..config.n_heads).collect(),
                    };
                    for head in heads {
                        sites.push(HookSite::attn_head_out(layer, head));
                    }
                }
                SiteKind::FfnHidden => sites.push(HookSite::ffn_hidden(layer)),
                SiteKind::FfnOut => sites.push(HookSite::ffn_out(layer)),
                SiteKind::Residual => sites.push(HookSite::residual(layer)),
            }
        }
    }
    for site in &sites {
        site.validate(config).map_err(CliError::config)?;
    }
    Ok(sites)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_object() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.budget, 100);
        assert_eq!(cfg.strategy.k, 8);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>("{\"nonsense\": 1}").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg: RunConfig =
            serde_json::from_str("{\"seed\": 3, \"strategy\": {\"k\": 4}}").unwrap();
        cfg.apply_overrides(&Overrides {
            seed: Some(9),
            k: Some(2),
            ..Default::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.strategy.k, 2);
    }

    #[test]
    fn budget_enforced() {
        let mut cfg = RunConfig::default();
        cfg.strategy.k = 101;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn synthetic_inputs_resolve() {
        let cfg: RunConfig = serde_json::from_str("{\"synthetic\": {}}").unwrap();
        let inputs = load_inputs(&cfg).unwrap();
        assert!(inputs.pairs.is_some());
        assert!(inputs.items.is_some());
        assert!(inputs.planted.is_some());
        assert_eq!(inputs.model.config().vocab_size, 64);
    }

    #[test]
    fn site_expansion() {
        let config = austeer_core::data::synthetic_config(16);
        let all_ffn = expand_sites(&[], &config).unwrap();
        assert_eq!(all_ffn.len(), 2);
        let sel = vec![SiteSelector {
            kind: "attn_head_out".into(),
            layer: Some(1),
            head: None,
        }];
        let heads = expand_sites(&sel, &config).unwrap();
        assert_eq!(heads.len(), config.n_heads);
    }
}
