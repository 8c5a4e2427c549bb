//! Resumable stage runner behind the `vulnrank` binary.

pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;

use std::path::Path;

use log::info;
use vulnrank_core::synth::generate_synthetic_corpus;
use vulnrank_core::Error;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
pub use stages::{run_all, run_stage, Outcome, RunOptions, Stage};

/// Writes a synthetic corpus to the configured source root and label file.
pub fn generate(cfg: &PipelineConfig) -> CliResult<()> {
    let section = cfg
        .generate
        .as_ref()
        .ok_or_else(|| Error::Config("`generate` needs a [generate] section in the config".into()))?;
    let corpus = generate_synthetic_corpus(&section.spec(), cfg.stage_seed("generate"))?;
    let root = &cfg.paths.source_root;
    if root.exists() {
        std::fs::remove_dir_all(root).map_err(|e| CliError::io(root, e))?;
    }
    corpus.write_sources(root)?;
    let labels = &cfg.paths.cve_labels;
    if let Some(parent) = labels.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    manifest::atomic_write(labels, |tmp| {
        std::fs::write(tmp, corpus.labels_csv()?).map_err(|e| CliError::io(tmp, e))
    })?;
    info!(
        "generated {} functions in {} files, {} labeled",
        corpus.functions.len(),
        corpus.files.len(),
        corpus.labels.len()
    );
    Ok(())
}

/// Loads the config and applies a `--seed` override.
pub fn load_config(path: &Path, seed: Option<u64>) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}
