//! Every command writes a manifest recording the resolved config hash and
//! the files it produced.

use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    files: Vec<&'a str>,
}

/// Write `manifest.json` into `out_dir`; `files` are names relative to it.
pub fn write_manifest(out_dir: &Path, config_hash: &str, files: &[String]) -> Result<()> {
    let mut names: Vec<&str> = files.iter().map(String::as_str).collect();
    names.sort_unstable();
    let manifest = Manifest {
        config_hash,
        files: names,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join("manifest.json"), text + "\n")
        .map_err(|e| CliError::data(format!("writing manifest: {e}")))
}
