//! Pipeline configuration file.
//!
//! The file is TOML. Every section and key is optional except
//! `[paths]`; relative paths resolve against the directory holding the
//! config file. See `vulnrank.example.toml` for the full grammar.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vulnrank_core::classify::{GbmParams, LinearParams, ModelKind, ModelSpec};
use vulnrank_core::features::{DEFAULT_LOWER_CUT, DEFAULT_UPPER_CUT_PERCENTILE};
use vulnrank_core::lm::LmConfig;
use vulnrank_core::sampling::{DEFAULT_K, DEFAULT_SYNTH_PERCENT};
use vulnrank_core::similarity::DEFAULT_BLOCK_SIZE;
use vulnrank_core::synth::SynthSpec;
use vulnrank_core::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub extract: ExtractSection,
    #[serde(default)]
    pub bpe: BpeSection,
    #[serde(default)]
    pub lm: LmSection,
    #[serde(default)]
    pub similarity: SimilaritySection,
    #[serde(default)]
    pub lexicon: LexiconSection,
    #[serde(default)]
    pub smote: SmoteSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub generate: Option<GenerateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub source_root: PathBuf,
    pub cve_labels: PathBuf,
    pub workspace: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub extensions: Vec<String>,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection {
            extensions: vulnrank_core::corpus::DEFAULT_EXTENSIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BpeSection {
    pub num_merges: usize,
}

impl Default for BpeSection {
    fn default() -> Self {
        BpeSection {
            num_merges: vulnrank_core::bpe::DEFAULT_NUM_MERGES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmSection {
    /// Embedding and hidden width.
    pub dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_seq_len: usize,
    pub holdout_fraction: f64,
}

impl Default for LmSection {
    fn default() -> Self {
        let d = LmConfig::new(4, 32);
        LmSection {
            dim: 32,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            max_seq_len: d.max_seq_len,
            holdout_fraction: d.holdout_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimilaritySection {
    pub block_size: usize,
}

impl Default for SimilaritySection {
    fn default() -> Self {
        SimilaritySection {
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconSection {
    pub lower_cut: u64,
    pub upper_cut_percentile: f64,
}

impl Default for LexiconSection {
    fn default() -> Self {
        LexiconSection {
            lower_cut: DEFAULT_LOWER_CUT,
            upper_cut_percentile: DEFAULT_UPPER_CUT_PERCENTILE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmoteSection {
    /// Synthetic rows as a percentage of the sampled training set.
    pub synth_percent: f64,
    pub k: usize,
}

impl Default for SmoteSection {
    fn default() -> Self {
        SmoteSection {
            synth_percent: DEFAULT_SYNTH_PERCENT,
            k: DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKind,
    pub gbm: GbmParams,
    pub linear: LinearParams,
}

impl Default for ModelSection {
    fn default() -> Self {
        let spec = ModelSpec::default();
        ModelSection {
            kind: spec.kind,
            gbm: spec.gbm,
            linear: spec.linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub test_fraction: f64,
    pub threshold: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            test_fraction: 0.2,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Rows of the risk table shown in report.md.
    pub top_rows: usize,
    /// Width of the similarity submatrix for the top-scored functions.
    pub cluster_size: usize,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            top_rows: 25,
            cluster_size: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub num_functions: usize,
    pub vuln_fraction: f64,
    pub signal_strength: f64,
    #[serde(default = "default_per_file")]
    pub functions_per_file: usize,
}

fn default_per_file() -> usize {
    50
}

impl GenerateSection {
    pub fn spec(&self) -> SynthSpec {
        SynthSpec {
            functions_per_file: self.functions_per_file,
            ..SynthSpec::new(self.num_functions, self.vuln_fraction, self.signal_strength)
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [
            &mut cfg.paths.source_root,
            &mut cfg.paths.cve_labels,
            &mut cfg.paths.workspace,
        ] {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.lm.dim == 0 || self.lm.batch_size == 0 {
            return bad("lm.dim and lm.batch_size must be positive");
        }
        if !(self.lm.learning_rate > 0.0) {
            return bad("lm.learning_rate must be positive");
        }
        if self.lm.max_seq_len < 2 {
            return bad("lm.max_seq_len must be at least 2");
        }
        if !(0.0..1.0).contains(&self.lm.holdout_fraction) {
            return bad("lm.holdout_fraction must lie in [0, 1)");
        }
        if self.similarity.block_size == 0 {
            return bad("similarity.block_size must be positive");
        }
        if !(self.smote.synth_percent >= 0.0 && self.smote.synth_percent < 100.0) {
            return bad("smote.synth_percent must lie in [0, 100)");
        }
        if self.smote.k == 0 {
            return bad("smote.k must be positive");
        }
        if !(self.eval.test_fraction > 0.0 && self.eval.test_fraction < 1.0) {
            return bad("eval.test_fraction must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.eval.threshold) {
            return bad("eval.threshold must lie in [0, 1]");
        }
        if self.extract.extensions.is_empty() {
            return bad("extract.extensions must not be empty");
        }
        self.model_spec().validate()
    }

    /// Seed for one stage, derived from the global seed and the stage name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(stage.as_bytes());
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.model.kind,
            gbm: self.model.gbm.clone(),
            linear: self.model.linear.clone(),
            seed: self.stage_seed("train"),
        }
    }

    pub fn lm_config(&self, vocab_size: usize) -> LmConfig {
        LmConfig {
            epochs: self.lm.epochs,
            batch_size: self.lm.batch_size,
            learning_rate: self.lm.learning_rate,
            max_seq_len: self.lm.max_seq_len,
            holdout_fraction: self.lm.holdout_fraction,
            seed: self.stage_seed("train-lm"),
            ..LmConfig::new(vocab_size, self.lm.dim)
        }
    }
}
