//! Command implementations. Each command is a pure function of the resolved
//! config and its input files: it writes its outputs under the out
//! directory, returns the produced file names, and the runner records them
//! in `manifest.json`.

pub mod analyze;
pub mod compare;
pub mod eval;
pub mod gen;
pub mod localize;
pub mod plan;
pub mod sweep;

use std::path::Path;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::write_manifest;

/// Ensure the out dir exists, run the command body, write the manifest.
pub fn with_out_dir(
    cfg: &RunConfig,
    body: impl FnOnce(&Path) -> Result<Vec<String>>,
) -> Result<()> {
    let out = cfg.out_dir()?;
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::config(format!("creating {}: {e}", out.display())))?;
    let files = body(out)?;
    write_manifest(out, &cfg.hash(), &files)?;
    Ok(())
}
