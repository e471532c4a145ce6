//! `gen`: materialize a synthetic task as files.

use austeer_core::data::{build_pairs_from_qa, gen_synthetic_task};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{container, pairs, tokenizer};

pub fn run(cfg: &RunConfig) -> Result<()> {
    let wire = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::config("gen requires a `synthetic` section"))?;
    let spec = wire.to_spec(cfg.seed)?;
    let task = gen_synthetic_task(&spec).map_err(CliError::config)?;
    let task_pairs = build_pairs_from_qa(&task.items)?;

    super::with_out_dir(cfg, |out| {
        container::save_model(&out.join("model.aust"), &task.model)?;
        tokenizer::save_tokenizer(&out.join("tokenizer.json"), &task.tokenizer)?;
        pairs::save_items(&out.join("items.jsonl"), &task.items)?;
        pairs::save_pairs(&out.join("pairs.jsonl"), &task_pairs)?;
        Ok(vec![
            "model.aust".into(),
            "tokenizer.json".into(),
            "items.jsonl".into(),
            "pairs.jsonl".into(),
        ])
    })?;
    println!(
        "generated synthetic task (seed {}): {} items, vocab {}",
        cfg.seed,
        task.items.len(),
        spec.vocab_size
    );
    println!("  target AU     {}", task.target_au);
    println!("  distractor AU {}", task.distractor_au);
    Ok(())
}
