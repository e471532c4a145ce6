//! Minimal decoder-only transformer with named, instrumentable hook sites.
//!
//! Architecture: pre-norm, RMSNorm, learned absolute position embeddings,
//! two-matrix GELU FFN (no gating), no KV cache. Every forward pass is a
//! pure deterministic function of (weights, tokens, plan).
//!
//! Hook sites and the vectors observed there:
//! - `AttnHeadOut(layer, head)`: one head's attention output (dim `d_head`),
//!   immediately before the O projection consumes it.
//! - `FfnHidden(layer)`: the post-GELU hidden vector (dim `d_ff`),
//!   immediately before the down projection consumes it.
//! - `FfnOut(layer)`: the FFN block output (dim `d_model`), before the
//!   residual add.
//! - `Residual(layer)`: the residual stream after the layer completes.
//!
//! Steering applies at every token position of every pass; activations are
//! captured at the last token position. When a plan is active, captured
//! vectors reflect the steered values.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{self, dot_f64, Matrix, Vector};
use crate::steering::SteeringPlan;

/// Token id reserved for unknown words.
pub const UNK_TOKEN: u32 = 0;
/// Token id reserved for end-of-sequence.
pub const EOS_TOKEN: u32 = 1;

/// Structural hyperparameters; all weight shapes are derived from these.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub norm_eps: f32,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_head", self.d_head),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq", self.max_seq),
        ] {
            if v == 0 {
                return Err(Error::Model(format!("config field {name} must be >= 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(Error::Model(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_heads * self.d_head != self.d_model {
            return Err(Error::Model(format!(
                "n_heads {} x d_head {} != d_model {}",
                self.n_heads, self.d_head, self.d_model
            )));
        }
        if !(self.norm_eps > 0.0) || !self.norm_eps.is_finite() {
            return Err(Error::Model(format!(
                "norm_eps must be a positive finite value, got {}",
                self.norm_eps
            )));
        }
        Ok(())
    }
}

/// Which kind of activation a hook site observes.
///
/// The derived `Ord` (declaration order) is the canonical kind order used
/// for all deterministic sorting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SiteKind {
    AttnHeadOut,
    FfnHidden,
    FfnOut,
    Residual,
}

impl SiteKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SiteKind::AttnHeadOut => "attn_head_out",
            SiteKind::FfnHidden => "ffn_hidden",
            SiteKind::FfnOut => "ffn_out",
            SiteKind::Residual => "residual",
        }
    }
}

impl FromStr for SiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attn_head_out" => Ok(SiteKind::AttnHeadOut),
            "ffn_hidden" => Ok(SiteKind::FfnHidden),
            "ffn_out" => Ok(SiteKind::FfnOut),
            "residual" => Ok(SiteKind::Residual),
            other => Err(Error::Param(format!("unknown site kind `{other}`"))),
        }
    }
}

/// A named position in the forward pass where a vector can be observed or edited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HookSite {
    pub layer: usize,
    pub kind: SiteKind,
    /// Present iff `kind == AttnHeadOut`.
    pub head: Option<usize>,
}

impl HookSite {
    pub fn attn_head_out(layer: usize, head: usize) -> Self {
        Self {
            layer,
            kind: SiteKind::AttnHeadOut,
            head: Some(head),
        }
    }

    pub fn ffn_hidden(layer: usize) -> Self {
        Self {
            layer,
            kind: SiteKind::FfnHidden,
            head: None,
        }
    }

    pub fn ffn_out(layer: usize) -> Self {
        Self {
            layer,
            kind: SiteKind::FfnOut,
            head: None,
        }
    }

    pub fn residual(layer: usize) -> Self {
        Self {
            layer,
            kind: SiteKind::Residual,
            head: None,
        }
    }

    /// Dimensionality of the vector observed at this site.
    pub fn dim(&self, config: &ModelConfig) -> usize {
        match self.kind {
            SiteKind::AttnHeadOut => config.d_head,
            SiteKind::FfnHidden => config.d_ff,
            SiteKind::FfnOut | SiteKind::Residual => config.d_model,
        }
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.layer >= config.n_layers {
            return Err(Error::Param(format!(
                "site {self} layer out of range (model has {} layers)",
                config.n_layers
            )));
        }
        match (self.kind, self.head) {
            (SiteKind::AttnHeadOut, Some(h)) => {
                if h >= config.n_heads {
                    return Err(Error::Param(format!(
                        "site {self} head out of range (model has {} heads)",
                        config.n_heads
                    )));
                }
            }
            (SiteKind::AttnHeadOut, None) => {
                return Err(Error::Param(format!("site {self} requires a head index")));
            }
            (_, Some(_)) => {
                return Err(Error::Param(format!(
                    "site {self} must not carry a head index"
                )));
            }
            (_, None) => {}
        }
        Ok(())
    }
}

impl fmt::Display for HookSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.head {
            Some(h) => write!(f, "{}[L{},H{}]", self.kind.as_str(), self.layer, h),
            None => write!(f, "{}[L{}]", self.kind.as_str(), self.layer),
        }
    }
}

/// Activation vectors captured at requested sites for one forward pass.
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    sites: BTreeMap<HookSite, Vector>,
    /// Token position the vectors were captured at (the last position).
    pub token_position: usize,
}

impl ActivationTrace {
    pub fn get(&self, site: &HookSite) -> Option<&Vector> {
        self.sites.get(site)
    }

    pub fn sites(&self) -> impl Iterator<Item = (&HookSite, &Vector)> {
        self.sites.iter()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Weights of one transformer layer.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub w_up: Matrix,
    pub w_down: Matrix,
    pub norm1: Vector,
    pub norm2: Vector,
}

/// All weights of a model, prior to validation.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vector,
    pub lm_head: Matrix,
}

/// A validated, immutable model. Shareable across concurrent forward passes.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    parts: ModelParts,
}

/// Which block's post-projection output to probe (see [`Model::projection_output`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionBlock {
    Attention,
    Ffn,
}

impl Model {
    /// Validate every weight shape against the config and assemble the model.
    ///
    /// Error messages name the offending tensor with its canonical container
    /// key (`layers.{i}.attn.wq`, ...).
    pub fn new(config: ModelConfig, parts: ModelParts) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        check_shape("tok_emb", &parts.tok_emb, config.vocab_size, d)?;
        check_shape("pos_emb", &parts.pos_emb, config.max_seq, d)?;
        if parts.layers.len() != config.n_layers {
            return Err(Error::Model(format!(
                "expected {} layers, got {}",
                config.n_layers,
                parts.layers.len()
            )));
        }
        for (i, layer) in parts.layers.iter().enumerate() {
            check_shape(&format!("layers.{i}.attn.wq"), &layer.wq, d, d)?;
            check_shape(&format!("layers.{i}.attn.wk"), &layer.wk, d, d)?;
            check_shape(&format!("layers.{i}.attn.wv"), &layer.wv, d, d)?;
            check_shape(&format!("layers.{i}.attn.wo"), &layer.wo, d, d)?;
            check_shape(&format!("layers.{i}.ffn.w_up"), &layer.w_up, config.d_ff, d)?;
            check_shape(&format!("layers.{i}.ffn.w_down"), &layer.w_down, d, config.d_ff)?;
            check_dim(&format!("layers.{i}.norm1"), &layer.norm1, d)?;
            check_dim(&format!("layers.{i}.norm2"), &layer.norm2, d)?;
        }
        check_dim("final_norm", &parts.final_norm, d)?;
        check_shape("lm_head", &parts.lm_head, config.vocab_size, d)?;
        Ok(Self { config, parts })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn tok_emb(&self) -> &Matrix {
        &self.parts.tok_emb
    }

    pub fn pos_emb(&self) -> &Matrix {
        &self.parts.pos_emb
    }

    pub fn layer(&self, i: usize) -> &LayerWeights {
        &self.parts.layers[i]
    }

    pub fn final_norm(&self) -> &Vector {
        &self.parts.final_norm
    }

    pub fn lm_head(&self) -> &Matrix {
        &self.parts.lm_head
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    /// Full forward pass; returns logits of shape `len x vocab`.
    ///
    /// With `plan == None` this is the reference pass. With a plan, every
    /// matching hook site is steered at every token position.
    pub fn forward(&self, tokens: &[u32], plan: Option<&SteeringPlan>) -> Result<Matrix> {
        let out = self.run(tokens, plan, None, None)?;
        Ok(out.logits)
    }

    /// Run a plain pass and capture activations at `sites` (last position).
    ///
    /// Recording does not perturb the pass: the logits are identical to a
    /// plain [`Model::forward`].
    pub fn record_activations(&self, tokens: &[u32], sites: &[HookSite]) -> Result<ActivationTrace> {
        let set = self.validated_site_set(sites)?;
        let out = self.run(tokens, None, Some(&set), None)?;
        Ok(out.trace.expect("capture requested"))
    }

    /// Forward pass with both a steering plan and activation capture.
    pub fn forward_traced(
        &self,
        tokens: &[u32],
        plan: Option<&SteeringPlan>,
        sites: &[HookSite],
    ) -> Result<(Matrix, ActivationTrace)> {
        let set = self.validated_site_set(sites)?;
        let out = self.run(tokens, plan, Some(&set), None)?;
        Ok((out.logits, out.trace.expect("capture requested")))
    }

    /// Diagnostic probe: the raw f64 output of one block's consuming
    /// projection (post `W_O` for attention, post `W_down` for the FFN) at
    /// the last token position, before rounding to f32 and before any
    /// `FfnOut` steering.
    pub fn projection_output(
        &self,
        tokens: &[u32],
        plan: Option<&SteeringPlan>,
        layer: usize,
        block: ProjectionBlock,
    ) -> Result<Vec<f64>> {
        if layer >= self.config.n_layers {
            return Err(Error::Param(format!(
                "probe layer {layer} out of range (model has {} layers)",
                self.config.n_layers
            )));
        }
        let out = self.run(tokens, plan, None, Some((layer, block)))?;
        Ok(out.probe.expect("probe requested"))
    }

    /// Greedy decoding: repeated argmax with ties broken by lowest token id.
    /// Stops after `max_new` tokens or when EOS is produced (EOS excluded
    /// from the returned continuation).
    pub fn generate_greedy(
        &self,
        prompt: &[u32],
        max_new: usize,
        plan: Option<&SteeringPlan>,
    ) -> Result<Vec<u32>> {
        if prompt.is_empty() {
            return Err(Error::Data("prompt is empty".into()));
        }
        if prompt.len() + max_new > self.config.max_seq {
            return Err(Error::Data(format!(
                "prompt length {} + max_new {} exceeds max_seq {}",
                prompt.len(),
                max_new,
                self.config.max_seq
            )));
        }
        let mut tokens = prompt.to_vec();
        let mut generated = Vec::new();
        for _ in 0..max_new {
            let logits = self.forward(&tokens, plan)?;
            let next = argmax_lowest_id(logits.row(logits.rows() - 1));
            if next == EOS_TOKEN {
                break;
            }
            tokens.push(next);
            generated.push(next);
        }
        Ok(generated)
    }

    fn validated_site_set(&self, sites: &[HookSite]) -> Result<BTreeSet<HookSite>> {
        let mut set = BTreeSet::new();
        for site in sites {
            site.validate(&self.config)?;
            set.insert(*site);
        }
        Ok(set)
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Data("token sequence is empty".into()));
        }
        if tokens.len() > self.config.max_seq {
            return Err(Error::Data(format!(
                "sequence length {} exceeds max_seq {}",
                tokens.len(),
                self.config.max_seq
            )));
        }
        for (pos, &t) in tokens.iter().enumerate() {
            if t as usize >= self.config.vocab_size {
                return Err(Error::Data(format!(
                    "token id {t} at position {pos} out of range (vocab size {})",
                    self.config.vocab_size
                )));
            }
        }
        Ok(())
    }

    /// The single forward engine behind forward / record / probe.
    fn run(
        &self,
        tokens: &[u32],
        plan: Option<&SteeringPlan>,
        capture: Option<&BTreeSet<HookSite>>,
        probe: Option<(usize, ProjectionBlock)>,
    ) -> Result<RunOutput> {
        self.check_tokens(tokens)?;
        if let Some(p) = plan {
            p.validate_for(&self.config)?;
        }
        let c = &self.config;
        let len = tokens.len();
        let last = len - 1;
        let d = c.d_model;
        let dh = c.d_head;

        let mut trace: BTreeMap<HookSite, Vector> = BTreeMap::new();
        let mut probe_out: Option<Vec<f64>> = None;

        // Embedding: token + learned absolute position.
        let mut resid: Vec<Vec<f32>> = Vec::with_capacity(len);
        for (pos, &t) in tokens.iter().enumerate() {
            let te = self.parts.tok_emb.row(t as usize);
            let pe = self.parts.pos_emb.row(pos);
            resid.push(te.iter().zip(pe).map(|(&a, &b)| a + b).collect());
        }

        for (li, layer) in self.parts.layers.iter().enumerate() {
            // Attention block (pre-norm).
            let normed: Vec<Vec<f32>> = resid
                .iter()
                .map(|r| numerics::rmsnorm_slice(r, layer.norm1.as_slice(), c.norm_eps))
                .collect();
            let q: Vec<Vec<f32>> = normed.iter().map(|n| matvec_slice(&layer.wq, n)).collect();
            let k: Vec<Vec<f32>> = normed.iter().map(|n| matvec_slice(&layer.wk, n)).collect();
            let v: Vec<Vec<f32>> = normed.iter().map(|n| matvec_slice(&layer.wv, n)).collect();
            let scale = 1.0 / libm::sqrt(dh as f64);

            for t in 0..len {
                let mut concat = vec![0.0f32; d];
                for h in 0..c.n_heads {
                    let off = h * dh;
                    // Causal scores over s <= t, softmaxed in f64.
                    let mut scores = Vec::with_capacity(t + 1);
                    for s in 0..=t {
                        scores.push(dot_f64(&q[t][off..off + dh], &k[s][off..off + dh]) * scale);
                    }
                    let weights = softmax_f64(&scores);
                    let mut head_out = vec![0.0f32; dh];
                    for (i, ho) in head_out.iter_mut().enumerate() {
                        let mut acc = 0.0f64;
                        for (s, &w) in weights.iter().enumerate() {
                            acc += w * v[s][off + i] as f64;
                        }
                        *ho = acc as f32;
                    }
                    let site = HookSite::attn_head_out(li, h);
                    self.steer(plan, &site, &mut head_out)?;
                    if t == last {
                        capture_site(capture, &mut trace, &site, &head_out);
                    }
                    concat[off..off + dh].copy_from_slice(&head_out);
                }
                // O projection.
                let attn_out = matvec_f64(&layer.wo, &concat);
                if t == last && probe == Some((li, ProjectionBlock::Attention)) {
                    probe_out = Some(attn_out.clone());
                }
                for (ri, r) in resid[t].iter_mut().enumerate() {
                    *r = (*r as f64 + attn_out[ri]) as f32;
                }
            }

            // FFN block (pre-norm).
            for t in 0..len {
                let n2 = numerics::rmsnorm_slice(&resid[t], layer.norm2.as_slice(), c.norm_eps);
                let mut hidden = vec![0.0f32; c.d_ff];
                for (r, hv) in hidden.iter_mut().enumerate() {
                    *hv = numerics::gelu(dot_f64(layer.w_up.row(r), &n2) as f32);
                }
                let hid_site = HookSite::ffn_hidden(li);
                self.steer(plan, &hid_site, &mut hidden)?;
                if t == last {
                    capture_site(capture, &mut trace, &hid_site, &hidden);
                }

                let down = matvec_f64(&layer.w_down, &hidden);
                if t == last && probe == Some((li, ProjectionBlock::Ffn)) {
                    probe_out = Some(down.clone());
                }
                let mut ffn_out: Vec<f32> = down.iter().map(|&x| x as f32).collect();
                let out_site = HookSite::ffn_out(li);
                self.steer(plan, &out_site, &mut ffn_out)?;
                if t == last {
                    capture_site(capture, &mut trace, &out_site, &ffn_out);
                }
                for (ri, r) in resid[t].iter_mut().enumerate() {
                    *r = (*r as f64 + ffn_out[ri] as f64) as f32;
                }

                let res_site = HookSite::residual(li);
                self.steer(plan, &res_site, &mut resid[t])?;
                if t == last {
                    capture_site(capture, &mut trace, &res_site, &resid[t]);
                }
            }
        }

        // Final norm and LM head.
        let vocab = c.vocab_size;
        let mut logits = Matrix::zeros(len, vocab);
        for (t, r) in resid.iter().enumerate() {
            let fin = numerics::rmsnorm_slice(r, self.parts.final_norm.as_slice(), c.norm_eps);
            for row in 0..vocab {
                logits.set(t, row, dot_f64(self.parts.lm_head.row(row), &fin) as f32);
            }
        }

        Ok(RunOutput {
            logits,
            trace: capture.map(|_| ActivationTrace {
                sites: trace,
                token_position: last,
            }),
            probe: probe_out,
        })
    }

    fn steer(&self, plan: Option<&SteeringPlan>, site: &HookSite, x: &mut [f32]) -> Result<()> {
        if let Some(p) = plan {
            if let Some(entries) = p.site_entries(site) {
                crate::steering::apply_entries_slice(x, entries)?;
            }
        }
        Ok(())
    }
}

struct RunOutput {
    logits: Matrix,
    trace: Option<ActivationTrace>,
    probe: Option<Vec<f64>>,
}

fn capture_site(
    capture: Option<&BTreeSet<HookSite>>,
    trace: &mut BTreeMap<HookSite, Vector>,
    site: &HookSite,
    values: &[f32],
) {
    if let Some(set) = capture {
        if set.contains(site) {
            trace.insert(*site, Vector::new(values.to_vec()).unwrap_or_else(|_| {
                // Steered activations stay finite for finite plans; a
                // non-finite value here means the weights were corrupted.
                Vector::zeros(values.len())
            }));
        }
    }
}

fn check_shape(name: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.rows() != rows || m.cols() != cols {
        return Err(Error::Model(format!(
            "tensor `{name}` has shape {}x{}, expected {rows}x{cols}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

fn check_dim(name: &str, v: &Vector, dim: usize) -> Result<()> {
    if v.dim() != dim {
        return Err(Error::Model(format!(
            "tensor `{name}` has dim {}, expected {dim}",
            v.dim()
        )));
    }
    Ok(())
}

fn matvec_slice(w: &Matrix, x: &[f32]) -> Vec<f32> {
    (0..w.rows()).map(|r| dot_f64(w.row(r), x) as f32).collect()
}

fn matvec_f64(w: &Matrix, x: &[f32]) -> Vec<f64> {
    (0..w.rows()).map(|r| dot_f64(w.row(r), x)).collect()
}

fn softmax_f64(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut exps = Vec::with_capacity(scores.len());
    for &s in scores {
        let e = libm::exp(s - max);
        sum += e;
        exps.push(e);
    }
    exps.iter_mut().for_each(|e| *e /= sum);
    exps
}

fn argmax_lowest_id(row: &[f32]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}
