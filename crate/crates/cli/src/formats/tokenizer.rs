//! Tokenizer file: a JSON object mapping token string to id.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use austeer_core::data::Tokenizer;

use crate::error::{CliError, Result};

pub fn load_tokenizer(path: &Path) -> Result<Tokenizer> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("reading {}: {e}", path.display())))?;
    let vocab: BTreeMap<String, u32> = serde_json::from_str(&text)
        .map_err(|e| CliError::data(format!("{}: malformed tokenizer JSON: {e}", path.display())))?;
    Tokenizer::new(vocab).map_err(CliError::data)
}

pub fn save_tokenizer(path: &Path, tokenizer: &Tokenizer) -> Result<()> {
    let text = serde_json::to_string_pretty(tokenizer.vocab()).expect("map serializes");
    fs::write(path, text + "\n")
        .map_err(|e| CliError::data(format!("writing {}: {e}", path.display())))
}
