//! Contrastive-pair construction, whitespace tokenization, and synthetic
//! task generation.
//!
//! The synthetic generator builds a small random model and surgically plants
//! units at one site:
//!
//! - a **target unit** whose consuming-projection column points at the
//!   target token's unembedding direction and whose producing row fires on
//!   the target answer token (and moderately on the answer-marker context);
//! - a **distractor unit** whose column points at a distractor token and
//!   whose row fires strongly on the answer-marker context (so the unsteered
//!   model prefers the distractor) and weakly on the target answer (so its
//!   momentum direction is consistently promoting, like the target unit's);
//! - a band of **detector decoys** whose rows fire on the target answer but
//!   whose columns stay small random noise, so they outrank the distractor
//!   unit in momentum magnitude without affecting outputs;
//! - **cancelling context pairs**: twin units with near-identical
//!   context-firing rows and exactly opposite columns aimed at random
//!   tokens. Untouched (or steered identically) the twins cancel; steering
//!   the whole population assigns each twin its own momentum-derived
//!   strength, breaks the cancellation, and floods the output with
//!   irrelevant token directions.
//!
//! The result is a ground-truth oracle: momentum localization ranks the
//! target unit first; boosting it flips the prediction from distractor to
//! target; small top-k steering succeeds while steering the whole population
//! degrades below the unsteered model.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audecomp::AUId;
use crate::error::{Error, Result};
use crate::model::{
    HookSite, LayerWeights, Model, ModelConfig, ModelParts, SiteKind, EOS_TOKEN, UNK_TOKEN,
};
use crate::numerics::{Matrix, Vector};

/// Separator between a question and its answer in pair texts.
pub const ANSWER_SEPARATOR: &str = "\nAnswer: ";
/// Token id of the answer marker in synthetic vocabularies.
pub const ANSWER_MARKER_TOKEN: u32 = 2;

/// Prompt template used for evaluation: the question followed by the bare
/// answer marker, so generation continues with the answer.
pub fn qa_prompt(question: &str) -> String {
    format!("{question}\nAnswer:")
}

/// A matched positive/negative text pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastivePair {
    pub id: String,
    pub positive: String,
    pub negative: String,
    pub meta: BTreeMap<String, String>,
}

impl ContrastivePair {
    pub fn new(
        id: impl Into<String>,
        positive: impl Into<String>,
        negative: impl Into<String>,
    ) -> Result<Self> {
        let (id, positive, negative) = (id.into(), positive.into(), negative.into());
        if id.is_empty() {
            return Err(Error::Data("pair id is empty".into()));
        }
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::Data(format!("pair `{id}`: empty text")));
        }
        if positive == negative {
            return Err(Error::Data(format!(
                "pair `{id}`: positive equals negative"
            )));
        }
        Ok(Self {
            id,
            positive,
            negative,
            meta: BTreeMap::new(),
        })
    }
}

/// A question with one correct answer and a pool of wrong answers.
#[derive(Debug, Clone, PartialEq)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub correct: String,
    pub wrong_pool: Vec<String>,
}

impl QAItem {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        correct: impl Into<String>,
        wrong_pool: Vec<String>,
    ) -> Result<Self> {
        let (id, question, correct) = (id.into(), question.into(), correct.into());
        if id.is_empty() || question.is_empty() || correct.is_empty() {
            return Err(Error::Data(format!("item `{id}`: empty field")));
        }
        if wrong_pool.is_empty() {
            return Err(Error::Data(format!("item `{id}`: empty wrong pool")));
        }
        if wrong_pool.contains(&correct) {
            return Err(Error::Data(format!(
                "item `{id}`: correct answer appears in wrong pool"
            )));
        }
        Ok(Self {
            id,
            question,
            correct,
            wrong_pool,
        })
    }
}

/// Whitespace tokenizer over an explicit string-to-id vocabulary.
/// Id 0 is reserved for unknown words, id 1 for end-of-sequence.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: BTreeMap<String, u32>,
    reverse: BTreeMap<u32, String>,
}

impl Tokenizer {
    pub fn new(vocab: BTreeMap<String, u32>) -> Result<Self> {
        let mut reverse = BTreeMap::new();
        for (tok, &id) in &vocab {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::Data(format!(
                    "token `{tok}` is empty or contains whitespace"
                )));
            }
            if let Some(prev) = reverse.insert(id, tok.clone()) {
                return Err(Error::Data(format!(
                    "tokens `{prev}` and `{tok}` both map to id {id}"
                )));
            }
        }
        Ok(Self { vocab, reverse })
    }

    /// Whitespace-split tokenization; unknown words map to id 0.
    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .map(|w| self.vocab.get(w).copied().unwrap_or(UNK_TOKEN))
            .collect()
    }

    /// Join token strings with single spaces. Ids without a vocabulary entry
    /// render as `<unk>` / `<eos>` / `<id>`.
    pub fn detokenize(&self, ids: &[u32]) -> String {
        let words: Vec<String> = ids
            .iter()
            .map(|&id| match self.reverse.get(&id) {
                Some(tok) => tok.clone(),
                None if id == UNK_TOKEN => "<unk>".to_string(),
                None if id == EOS_TOKEN => "<eos>".to_string(),
                None => format!("<{id}>"),
            })
            .collect();
        words.join(" ")
    }

    pub fn token_string(&self, id: u32) -> Option<&str> {
        self.reverse.get(&id).map(String::as_str)
    }

    pub fn vocab(&self) -> &BTreeMap<String, u32> {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }
}

/// Jaccard overlap of whitespace token sets.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let sa: alloc::collections::BTreeSet<&str> = a.split_whitespace().collect();
    let sb: alloc::collections::BTreeSet<&str> = b.split_whitespace().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 1.0;
    }
    let inter = sa.intersection(&sb).count();
    inter as f64 / union as f64
}

/// Pick the wrong answer most lexically similar to the correct one
/// (ties resolve to the lowest pool index).
fn most_similar_wrong<'a>(correct: &str, pool: &'a [String]) -> &'a str {
    let mut best = 0;
    let mut best_sim = jaccard(correct, &pool[0]);
    for (i, cand) in pool.iter().enumerate().skip(1) {
        let sim = jaccard(correct, cand);
        if sim > best_sim {
            best = i;
            best_sim = sim;
        }
    }
    &pool[best]
}

/// Build contrastive pairs from QA items: positive = question + correct
/// answer, negative = question + the most similar wrong answer.
pub fn build_pairs_from_qa(items: &[QAItem]) -> Result<Vec<ContrastivePair>> {
    let mut pairs = Vec::with_capacity(items.len());
    for item in items {
        let wrong = most_similar_wrong(&item.correct, &item.wrong_pool);
        let positive = format!("{}{}{}", item.question, ANSWER_SEPARATOR, item.correct);
        let negative = format!("{}{}{}", item.question, ANSWER_SEPARATOR, wrong);
        let mut pair = ContrastivePair::new(item.id.clone(), positive, negative)?;
        pair.meta
            .insert("neg_selection".into(), "jaccard".into());
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Parameters of a planted-AU synthetic task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub vocab_size: usize,
    pub n_items: usize,
    pub target_token: u32,
    pub distractor_token: u32,
    pub planted_site: HookSite,
    pub planted_dim: usize,
}

impl SyntheticSpec {
    /// Default desk-scale task: 64-token vocabulary, 60 items, planted at
    /// the last layer's FFN hidden.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            vocab_size: 64,
            n_items: 60,
            target_token: 7,
            distractor_token: 9,
            planted_site: HookSite::ffn_hidden(1),
            planted_dim: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.planted_site.kind {
            SiteKind::AttnHeadOut | SiteKind::FfnHidden => {}
            other => {
                return Err(Error::Param(format!(
                    "invalid planted site kind {}: must be attn_head_out or ffn_hidden",
                    other.as_str()
                )));
            }
        }
        if self.vocab_size < 16 {
            return Err(Error::Param(format!(
                "synthetic vocab_size {} too small (need >= 16)",
                self.vocab_size
            )));
        }
        if self.n_items == 0 {
            return Err(Error::Param("synthetic n_items must be >= 1".into()));
        }
        for (name, tok) in [
            ("target_token", self.target_token),
            ("distractor_token", self.distractor_token),
        ] {
            if (tok as usize) >= self.vocab_size {
                return Err(Error::Param(format!(
                    "{name} {tok} out of range for vocab {}",
                    self.vocab_size
                )));
            }
            if tok <= ANSWER_MARKER_TOKEN {
                return Err(Error::Param(format!(
                    "{name} {tok} collides with a reserved id (0..=2)"
                )));
            }
        }
        if self.target_token == self.distractor_token {
            return Err(Error::Param("target and distractor tokens must differ".into()));
        }
        Ok(())
    }
}

/// A generated planted-AU task.
#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub model: Model,
    pub tokenizer: Tokenizer,
    pub items: Vec<QAItem>,
    /// The AU planted to promote the target token.
    pub target_au: AUId,
    /// The AU planted to promote the distractor token (the unsteered default).
    pub distractor_au: AUId,
}

/// The fixed desk-scale architecture used by synthetic tasks and tests.
pub fn synthetic_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        n_layers: 2,
        d_model: 64,
        n_heads: 4,
        d_head: 16,
        d_ff: 128,
        vocab_size,
        max_seq: 64,
        norm_eps: 1e-5,
    }
}

/// Vocabulary of a synthetic task: reserved ids 0..=2, then `t{id}` words.
pub fn synthetic_tokenizer(vocab_size: usize) -> Tokenizer {
    let mut vocab = BTreeMap::new();
    vocab.insert("<unk>".to_string(), UNK_TOKEN);
    vocab.insert("<eos>".to_string(), EOS_TOKEN);
    vocab.insert("Answer:".to_string(), ANSWER_MARKER_TOKEN);
    for id in 3..vocab_size as u32 {
        vocab.insert(format!("t{id}"), id);
    }
    Tokenizer::new(vocab).expect("synthetic vocabulary is well-formed")
}

const EMB_SCALE: f32 = 0.5;
const POS_SCALE: f32 = 0.02;
const ATTN_SCALE: f32 = 0.04;
const FFN_SCALE: f32 = 0.1;

/// Strength of the planted consuming-projection columns.
const ALPHA_PLANT: f64 = 4.0;
/// Target unit's producing-row weight on the target-answer direction.
const BETA_DETECT_TARGET: f64 = 2.0;
/// Target unit's producing-row weight on the answer-marker context.
const BETA_CONTEXT_TARGET: f64 = 1.0;
/// Distractor unit's (faint) weight on the target-answer direction; its
/// momentum ends up noise-dominated, so its score never joins the perfect
/// detector club.
const BETA_DETECT_DISTRACTOR: f64 = 0.1;
/// Distractor unit's weight on the answer-marker context; larger than the
/// target unit's so the unsteered model prefers the distractor.
const BETA_CONTEXT_DISTRACTOR: f64 = 2.2;
/// Number of detector decoy units (fewer on narrow sites).
const N_DECOYS: usize = 12;
/// Decoy producing-row weights span this band, below the target unit's.
const DECOY_BETA_LO: f64 = 0.7;
const DECOY_BETA_HI: f64 = 1.05;
/// Number of cancelling context twin pairs (fewer on narrow sites).
const N_CONTEXT_PAIRS: usize = 20;
/// Context-row weights on the marker direction span this band.
const CONTEXT_BETA_LO: f64 = 1.0;
const CONTEXT_BETA_HI: f64 = 2.0;
/// Magnitude of the opposed context columns.
const CONTEXT_COL: f64 = 20.0;
/// Faint opposed detect components that pin the twins' momentum directions
/// apart (promote vs suppress), so population-wide adaptive strengths break
/// the twins' cancellation in a fixed direction.
const CONTEXT_DETECT: f64 = 0.15;
/// Attention head outputs are attenuated by position averaging; compensate.
const ATTN_PRODUCE_BOOST: f64 = 3.0;

/// A model with uniform random weights, fully determined by the seed.
pub fn random_model(config: &ModelConfig, seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parts = random_parts(config, &mut rng);
    Model::new(*config, parts).expect("random parts match the config")
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

fn random_parts(config: &ModelConfig, rng: &mut ChaCha8Rng) -> ModelParts {
    let d = config.d_model;
    let ones = Vector::new(vec![1.0; d]).expect("finite");
    let tok_emb = random_matrix(rng, config.vocab_size, d, EMB_SCALE);
    let pos_emb = random_matrix(rng, config.max_seq, d, POS_SCALE);
    let layers = (0..config.n_layers)
        .map(|_| LayerWeights {
            wq: random_matrix(rng, d, d, ATTN_SCALE),
            wk: random_matrix(rng, d, d, ATTN_SCALE),
            wv: random_matrix(rng, d, d, ATTN_SCALE),
            wo: random_matrix(rng, d, d, ATTN_SCALE),
            w_up: random_matrix(rng, config.d_ff, d, FFN_SCALE),
            w_down: random_matrix(rng, d, config.d_ff, FFN_SCALE),
            norm1: ones.clone(),
            norm2: ones.clone(),
        })
        .collect();
    let final_norm = ones.clone();
    let lm_head = random_matrix(rng, config.vocab_size, d, EMB_SCALE);
    ModelParts {
        tok_emb,
        pos_emb,
        layers,
        final_norm,
        lm_head,
    }
}

fn unit_direction(row: &[f32]) -> Result<Vec<f64>> {
    let norm: f64 = row.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
    let norm = libm::sqrt(norm);
    if norm < 1e-9 {
        return Err(Error::Data("degenerate zero direction".into()));
    }
    Ok(row.iter().map(|&v| v as f64 / norm).collect())
}

/// `a` minus its projection onto unit vector `b`, renormalized.
fn orthogonalize(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let raw: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - dot * y).collect();
    let norm = libm::sqrt(raw.iter().map(|v| v * v).sum());
    if norm < 1e-9 {
        return Err(Error::Data("degenerate parallel directions".into()));
    }
    Ok(raw.into_iter().map(|v| v / norm).collect())
}

/// Generate a planted-AU task: model, tokenizer, and QA items whose correct
/// answer is the target token. Fully deterministic in the spec.
pub fn gen_synthetic_task(spec: &SyntheticSpec) -> Result<SyntheticTask> {
    spec.validate()?;
    let config = synthetic_config(spec.vocab_size);
    spec.planted_site.validate(&config)?;
    let target_au = AUId::new(spec.planted_site, spec.planted_dim);
    target_au.validate(&config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts = random_parts(&config, &mut rng);

    let u_target = unit_direction(parts.lm_head.row(spec.target_token as usize))?;
    let u_distr = unit_direction(parts.lm_head.row(spec.distractor_token as usize))?;
    let e_target = unit_direction(parts.tok_emb.row(spec.target_token as usize))?;
    let e_marker = unit_direction(parts.tok_emb.row(ANSWER_MARKER_TOKEN as usize))?;
    // Detector direction: the target embedding with its marker component
    // removed, so detector responses at "... Answer:" prompts carry no
    // systematic marker term and stay seed-robust.
    let e_detect = orthogonalize(&e_target, &e_marker)?;

    let site_dim = spec.planted_site.dim(&config);
    let distr_dim = (spec.planted_dim + site_dim / 2) % site_dim;
    let distractor_au = AUId::new(spec.planted_site, distr_dim);
    let layer = spec.planted_site.layer;

    // Deterministic walk over free dims of the site: decoys first, then the
    // context twins.
    let n_decoys = N_DECOYS.min(site_dim.saturating_sub(2) / 4);
    let n_ctx_pairs = N_CONTEXT_PAIRS.min((site_dim - 2 - n_decoys) / 4);
    let mut free_dims = Vec::with_capacity(n_decoys + 2 * n_ctx_pairs);
    let mut cursor = spec.planted_dim;
    while free_dims.len() < n_decoys + 2 * n_ctx_pairs {
        cursor = (cursor + 3) % site_dim;
        if cursor != spec.planted_dim && cursor != distr_dim && !free_dims.contains(&cursor) {
            free_dims.push(cursor);
        }
    }
    let (decoy_dims, ctx_dims) = free_dims.split_at(n_decoys);

    // The producing signal passes through attention averaging for head
    // sites, so their rows get an extra gain.
    let produce_gain = match spec.planted_site.kind {
        SiteKind::AttnHeadOut => ATTN_PRODUCE_BOOST,
        _ => 1.0,
    };
    let head_base = spec
        .planted_site
        .head
        .map(|h| h * config.d_head)
        .unwrap_or(0);

    // Context-pair token directions and twin-row jitter, drawn before the
    // item loop so construction order stays fixed.
    let safe_tokens: Vec<u32> = (3..spec.vocab_size as u32)
        .filter(|&t| t != spec.target_token && t != spec.distractor_token)
        .collect();
    let ctx_directions: Vec<Vec<f64>> = (0..n_ctx_pairs)
        .map(|j| unit_direction(parts.lm_head.row(safe_tokens[j % safe_tokens.len()] as usize)))
        .collect::<Result<_>>()?;

    let lw = &mut parts.layers[layer];
    {
        // Consuming columns: w_down for FFN hidden, W_O for head outputs.
        let col_target = head_base + spec.planted_dim;
        let col_distr = head_base + distr_dim;
        let cols = match spec.planted_site.kind {
            SiteKind::FfnHidden => &mut lw.w_down,
            SiteKind::AttnHeadOut => &mut lw.wo,
            _ => unreachable!("validated above"),
        };
        for r in 0..config.d_model {
            cols.set(r, col_target, (ALPHA_PLANT * u_target[r]) as f32);
            cols.set(r, col_distr, (ALPHA_PLANT * u_distr[r]) as f32);
            for (j, dir) in ctx_directions.iter().enumerate() {
                let v = (CONTEXT_COL * dir[r]) as f32;
                cols.set(r, head_base + ctx_dims[2 * j], v);
                cols.set(r, head_base + ctx_dims[2 * j + 1], -v);
            }
        }
    }
    {
        // Producing rows: w_up for FFN hidden, W_V for head outputs.
        let rows = match spec.planted_site.kind {
            SiteKind::FfnHidden => &mut lw.w_up,
            SiteKind::AttnHeadOut => &mut lw.wv,
            _ => unreachable!("validated above"),
        };
        for c in 0..config.d_model {
            rows.set(
                head_base + spec.planted_dim,
                c,
                (produce_gain
                    * (BETA_DETECT_TARGET * e_detect[c] + BETA_CONTEXT_TARGET * e_marker[c]))
                    as f32,
            );
            rows.set(
                head_base + distr_dim,
                c,
                (produce_gain
                    * (BETA_DETECT_DISTRACTOR * e_detect[c]
                        + BETA_CONTEXT_DISTRACTOR * e_marker[c])) as f32,
            );
            for (j, &dim) in decoy_dims.iter().enumerate() {
                let beta = DECOY_BETA_LO
                    + (DECOY_BETA_HI - DECOY_BETA_LO) * j as f64 / (n_decoys.max(2) - 1) as f64;
                rows.set(head_base + dim, c, (produce_gain * beta * e_detect[c]) as f32);
            }
            for j in 0..n_ctx_pairs {
                let beta = CONTEXT_BETA_LO
                    + (CONTEXT_BETA_HI - CONTEXT_BETA_LO) * j as f64
                        / (n_ctx_pairs.max(2) - 1) as f64;
                let base_row = produce_gain * beta * e_marker[c];
                let detect = produce_gain * CONTEXT_DETECT * e_detect[c];
                rows.set(head_base + ctx_dims[2 * j], c, (base_row + detect) as f32);
                rows.set(head_base + ctx_dims[2 * j + 1], c, (base_row - detect) as f32);
            }
        }
    }
    let model = Model::new(config, parts)?;
    let tokenizer = synthetic_tokenizer(spec.vocab_size);

    let correct = tokenizer
        .token_string(spec.target_token)
        .expect("target in vocab")
        .to_string();
    let distractor_str = tokenizer
        .token_string(spec.distractor_token)
        .expect("distractor in vocab")
        .to_string();

    let mut items = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let qlen = rng.gen_range(3..=6usize);
        let mut words = Vec::with_capacity(qlen);
        for _ in 0..qlen {
            words.push(format!("t{}", sample_safe_token(&mut rng, spec)));
        }
        let question = words.join(" ");
        let wrong = format!("t{}", sample_safe_token(&mut rng, spec));
        // The varying wrong answer sits first so Jaccard ties select it;
        // the distractor stays in the pool as required.
        let wrong_pool = vec![wrong, distractor_str.clone()];
        items.push(QAItem::new(
            format!("item{i:04}"),
            question,
            correct.clone(),
            wrong_pool,
        )?);
    }

    Ok(SyntheticTask {
        model,
        tokenizer,
        items,
        target_au,
        distractor_au,
    })
}

fn sample_safe_token(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> u32 {
    loop {
        let id = rng.gen_range(3..spec.vocab_size as u32);
        if id != spec.target_token && id != spec.distractor_token {
            return id;
        }
    }
}

/// Small seeded model for unit tests across the crate.
#[cfg(test)]
pub(crate) fn test_model(seed: u64) -> Model {
    random_model(&synthetic_config(16), seed)
}

/// Matching tokenizer for [`test_model`].
#[cfg(test)]
pub(crate) fn test_tokenizer(vocab_size: usize) -> Tokenizer {
    synthetic_tokenizer(vocab_size)
}
