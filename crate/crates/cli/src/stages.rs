//! Pipeline stages, their artifacts and the resume logic.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use vulnrank_core::bpe::{self, EncodeStats};
use vulnrank_core::classify::{self, EvalReport, TrainedModel};
use vulnrank_core::corpus::{self, FunctionRecord};
use vulnrank_core::features;
use vulnrank_core::lm;
use vulnrank_core::sampling::{self, LabeledDataset};
use vulnrank_core::similarity;
use vulnrank_core::Error;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{atomic_write, hash_bytes, hash_file, hash_tree, Manifest, StageEntry};
use crate::report;

pub const FUNCTIONS: &str = "functions.jsonl";
pub const EXTRACT_REPORT: &str = "extract_report.json";
pub const MERGES: &str = "merges.txt";
pub const VOCAB: &str = "vocab.tsv";
pub const TOKENS: &str = "tokens.jsonl";
pub const ENCODE_STATS: &str = "encode_stats.json";
pub const LM_PARAMS: &str = "lm_params.txt";
pub const LM_HISTORY: &str = "lm_history.json";
pub const EMBEDDINGS: &str = "embeddings.csv";
pub const ROWSUMS: &str = "rowsums.csv";
pub const FEATURES: &str = "features.csv";
pub const LEXICON: &str = "lexicon.json";
pub const SPLIT: &str = "split.csv";
pub const SAMPLED: &str = "train_sampled.csv";
pub const MODEL: &str = "model.json";
pub const SCORES: &str = "scores.csv";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const GAIN_CURVE: &str = "gain_curve.csv";
pub const REPORT: &str = "report.md";
pub const RANKING: &str = "risk_ranking.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Extract,
    Bpe,
    Encode,
    TrainLm,
    Embed,
    Simrows,
    Features,
    Sample,
    Train,
    Score,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::Extract,
        Stage::Bpe,
        Stage::Encode,
        Stage::TrainLm,
        Stage::Embed,
        Stage::Simrows,
        Stage::Features,
        Stage::Sample,
        Stage::Train,
        Stage::Score,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Extract => "extract",
            Stage::Bpe => "bpe",
            Stage::Encode => "encode",
            Stage::TrainLm => "train-lm",
            Stage::Embed => "embed",
            Stage::Simrows => "simrows",
            Stage::Features => "features",
            Stage::Sample => "sample",
            Stage::Train => "train",
            Stage::Score => "score",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Workspace artifacts read by this stage.
    pub fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Extract => &[],
            Stage::Bpe => &[FUNCTIONS],
            Stage::Encode => &[FUNCTIONS, MERGES, VOCAB],
            Stage::TrainLm => &[TOKENS, VOCAB],
            Stage::Embed => &[TOKENS, LM_PARAMS],
            Stage::Simrows => &[EMBEDDINGS],
            Stage::Features => &[FUNCTIONS, EMBEDDINGS, ROWSUMS],
            Stage::Sample => &[FEATURES, SPLIT],
            Stage::Train => &[SAMPLED],
            Stage::Score => &[MODEL, FEATURES],
            Stage::Evaluate => &[SCORES, SPLIT],
            Stage::Report => &[FUNCTIONS, SCORES, SPLIT, EVAL_REPORT, EMBEDDINGS],
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Extract => &[FUNCTIONS, EXTRACT_REPORT],
            Stage::Bpe => &[MERGES, VOCAB],
            Stage::Encode => &[TOKENS, ENCODE_STATS],
            Stage::TrainLm => &[LM_PARAMS, LM_HISTORY],
            Stage::Embed => &[EMBEDDINGS],
            Stage::Simrows => &[ROWSUMS],
            Stage::Features => &[FEATURES, LEXICON, SPLIT],
            Stage::Sample => &[SAMPLED],
            Stage::Train => &[MODEL],
            Stage::Score => &[SCORES],
            Stage::Evaluate => &[EVAL_REPORT, GAIN_CURVE],
            Stage::Report => &[REPORT, RANKING],
        }
    }

    fn producer(artifact: &str) -> Stage {
        Stage::ALL
            .into_iter()
            .find(|s| s.outputs().contains(&artifact))
            .expect("every input artifact has a producing stage")
    }

    /// The config values that influence this stage's outputs.
    fn config_fingerprint(self, cfg: &PipelineConfig) -> serde_json::Value {
        use serde_json::json;
        match self {
            Stage::Extract => json!({ "paths": cfg.paths, "extract": cfg.extract }),
            Stage::Bpe => json!({ "bpe": cfg.bpe }),
            Stage::Encode | Stage::Embed | Stage::Simrows | Stage::Score => json!({}),
            Stage::TrainLm => json!({ "lm": cfg.lm, "seed": cfg.stage_seed("train-lm") }),
            Stage::Features => json!({
                "lexicon": cfg.lexicon,
                "test_fraction": cfg.eval.test_fraction,
                "seed": cfg.stage_seed("split"),
            }),
            Stage::Sample => json!({ "smote": cfg.smote, "seed": cfg.stage_seed("sample") }),
            Stage::Train => json!({ "model": cfg.model_spec() }),
            Stage::Evaluate => json!({ "threshold": cfg.eval.threshold }),
            Stage::Report => json!({ "report": cfg.report }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    UpToDate,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub force: bool,
}

/// The most upstream stage whose output is missing on the path to `stage`.
fn first_missing(stage: Stage, ws: &Path) -> Option<(Stage, String)> {
    for artifact in stage.inputs() {
        if !ws.join(artifact).exists() {
            let producer = Stage::producer(artifact);
            return Some(first_missing(producer, ws).unwrap_or((producer, artifact.to_string())));
        }
    }
    None
}

fn external_inputs(cfg: &PipelineConfig) -> CliResult<BTreeMap<String, String>> {
    let exts: Vec<&str> = cfg.extract.extensions.iter().map(String::as_str).collect();
    let files = corpus::scan_sources(&cfg.paths.source_root, &exts)?;
    if !cfg.paths.cve_labels.is_file() {
        return Err(Error::Config(format!(
            "CVE label file {} does not exist",
            cfg.paths.cve_labels.display()
        ))
        .into());
    }
    Ok(BTreeMap::from([
        ("source_root".to_string(), hash_tree(&cfg.paths.source_root, &files)?),
        ("cve_labels".to_string(), hash_file(&cfg.paths.cve_labels)?),
    ]))
}

/// Runs one stage unless the manifest shows its outputs are current.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig, opts: RunOptions) -> CliResult<Outcome> {
    let ws = &cfg.paths.workspace;
    fs::create_dir_all(ws).map_err(|e| CliError::io(ws, e))?;
    if let Some((producer, artifact)) = first_missing(stage, ws) {
        return Err(CliError::MissingArtifact {
            stage: producer.name(),
            artifact,
        });
    }
    let inputs = if stage == Stage::Extract {
        external_inputs(cfg)?
    } else {
        stage
            .inputs()
            .iter()
            .map(|a| Ok((a.to_string(), hash_file(&ws.join(a))?)))
            .collect::<CliResult<_>>()?
    };
    let config_hash = hash_bytes(stage.config_fingerprint(cfg).to_string().as_bytes());

    let mut manifest = Manifest::load(ws)?;
    if let Some(entry) = manifest.stages.get(stage.name()) {
        let present: Vec<&&str> = stage.outputs().iter().filter(|a| ws.join(a).exists()).collect();
        if entry.config_hash != config_hash && !present.is_empty() && !opts.force {
            return Err(CliError::ConfigMismatch {
                stage: stage.name(),
                artifact: present[0].to_string(),
            });
        }
        if entry.config_hash == config_hash && entry.inputs == inputs && outputs_match(ws, stage, &entry.outputs)? {
            info!("{}: up to date", stage.name());
            return Ok(Outcome::UpToDate);
        }
    }

    let start = Instant::now();
    execute(stage, cfg, ws)?;
    let duration_ms = start.elapsed().as_millis();
    let outputs = stage
        .outputs()
        .iter()
        .map(|a| Ok((a.to_string(), hash_file(&ws.join(a))?)))
        .collect::<CliResult<_>>()?;
    manifest.stages.insert(
        stage.name().to_string(),
        StageEntry {
            config_hash,
            inputs,
            outputs,
            duration_ms,
        },
    );
    manifest.save(ws)?;
    info!("{}: done in {duration_ms} ms", stage.name());
    Ok(Outcome::Ran)
}

fn outputs_match(ws: &Path, stage: Stage, recorded: &BTreeMap<String, String>) -> CliResult<bool> {
    for a in stage.outputs() {
        let p = ws.join(a);
        if !p.exists() || recorded.get(*a) != Some(&hash_file(&p)?) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Every stage in order; returns how many actually ran.
pub fn run_all(cfg: &PipelineConfig, opts: RunOptions) -> CliResult<usize> {
    let mut ran = 0;
    for stage in Stage::ALL {
        if run_stage(stage, cfg, opts)? == Outcome::Ran {
            ran += 1;
        }
    }
    Ok(ran)
}

fn execute(stage: Stage, cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    match stage {
        Stage::Extract => extract(cfg, ws),
        Stage::Bpe => learn_merges(cfg, ws),
        Stage::Encode => encode(ws),
        Stage::TrainLm => train_lm(cfg, ws),
        Stage::Embed => embed(ws),
        Stage::Simrows => simrows(cfg, ws),
        Stage::Features => build_features(cfg, ws),
        Stage::Sample => sample(cfg, ws),
        Stage::Train => train(cfg, ws),
        Stage::Score => score(ws),
        Stage::Evaluate => evaluate(cfg, ws),
        Stage::Report => write_report(cfg, ws),
    }
}

fn write_with<F>(path: PathBuf, f: F) -> CliResult<()>
where
    F: FnOnce(&Path) -> vulnrank_core::Result<()>,
{
    atomic_write(&path, |tmp| f(tmp).map_err(CliError::from))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    atomic_write(&path, |tmp| fs::write(tmp, &text).map_err(|e| CliError::io(tmp, e)))
}

#[derive(Debug, Serialize)]
struct ExtractReport {
    functions: usize,
    labeled: usize,
    warnings: Vec<corpus::ExtractWarning>,
    labels: corpus::LabelMergeReport,
}

fn extract(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let exts: Vec<&str> = cfg.extract.extensions.iter().map(String::as_str).collect();
    let extraction = corpus::extract_corpus(&cfg.paths.source_root, &exts)?;
    for w in &extraction.warnings {
        warn!("{}:{}: {}", w.file_path, w.line, w.message);
    }
    let entries = corpus::load_cve_labels(&cfg.paths.cve_labels)?;
    let (records, merge) = corpus::merge_cve_labels(&extraction.records, &entries);
    for u in &merge.unmatched {
        warn!("label {} names {}:{} which was not extracted", u.cve_id, u.file_path, u.function_name);
    }
    let labeled = records.iter().filter(|r| r.label == 1).count();
    info!("extracted {} functions, {labeled} labeled", records.len());
    write_with(ws.join(FUNCTIONS), |p| corpus::write_records_jsonl(p, &records))?;
    write_json(
        ws.join(EXTRACT_REPORT),
        &ExtractReport {
            functions: records.len(),
            labeled,
            warnings: extraction.warnings,
            labels: merge,
        },
    )
}

fn learn_merges(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let records = corpus::read_records_jsonl(&ws.join(FUNCTIONS))?;
    let (merges, vocab) = bpe::learn_bpe(&bpe::word_frequencies(&records), cfg.bpe.num_merges);
    info!("learned {} merges, vocabulary of {}", merges.num_merges(), vocab.len());
    write_with(ws.join(MERGES), |p| bpe::write_merges(p, &merges))?;
    write_with(ws.join(VOCAB), |p| bpe::write_vocab(p, &vocab))
}

fn encode(ws: &Path) -> CliResult<()> {
    let records = corpus::read_records_jsonl(&ws.join(FUNCTIONS))?;
    let merges = bpe::read_merges(&ws.join(MERGES))?;
    let vocab = bpe::read_vocab(&ws.join(VOCAB))?;
    let (seqs, stats): (_, EncodeStats) = bpe::encode(&records, &merges, &vocab);
    info!("{} subtokens, OOV rate {:.4}", stats.tokens, stats.oov_rate);
    write_with(ws.join(TOKENS), |p| bpe::write_tokens_jsonl(p, &seqs))?;
    write_json(ws.join(ENCODE_STATS), &stats)
}

fn train_lm(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let seqs = bpe::read_tokens_jsonl(&ws.join(TOKENS))?;
    let vocab = bpe::read_vocab(&ws.join(VOCAB))?;
    let lm_cfg = cfg.lm_config(vocab.len());
    let (params, history) = lm::train(lm::init_params(&lm_cfg), &seqs, &lm_cfg)?;
    for e in &history.epochs {
        match &e.heldout {
            Some(h) => info!(
                "epoch {}: train ppl {:.3}, held-out ppl {:.3}, held-out acc {:.3}",
                e.epoch, e.train.perplexity, h.perplexity, h.accuracy
            ),
            None => info!("epoch {}: train ppl {:.3}", e.epoch, e.train.perplexity),
        }
    }
    write_with(ws.join(LM_PARAMS), |p| lm::write_params(p, &params, &lm_cfg))?;
    write_json(ws.join(LM_HISTORY), &history)
}

fn embed(ws: &Path) -> CliResult<()> {
    let seqs = bpe::read_tokens_jsonl(&ws.join(TOKENS))?;
    let (params, _) = lm::read_params(&ws.join(LM_PARAMS))?;
    let embeddings = seqs
        .iter()
        .map(|s| lm::embed_function(&params, s.function_id, &s.ids))
        .collect::<vulnrank_core::Result<Vec<_>>>()?;
    write_with(ws.join(EMBEDDINGS), |p| lm::write_embeddings_csv(p, &embeddings))
}

fn simrows(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let embeddings = lm::read_embeddings_csv(&ws.join(EMBEDDINGS))?;
    let sums = similarity::embedding_row_sums(&embeddings, cfg.similarity.block_size)?;
    write_with(ws.join(ROWSUMS), |p| similarity::write_row_sums_csv(p, &sums))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRow {
    pub function_id: u64,
    pub split: String,
    pub label: u8,
}

pub fn read_split(path: &Path) -> CliResult<Vec<SplitRow>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::from)?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<SplitRow>, _>>()
        .map_err(Error::from)?;
    Ok(rows)
}

fn build_features(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let records = corpus::read_records_jsonl(&ws.join(FUNCTIONS))?;
    let embeddings = lm::read_embeddings_csv(&ws.join(EMBEDDINGS))?;
    let sums = similarity::read_row_sums_csv(&ws.join(ROWSUMS))?;

    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let (_, test) = sampling::stratified_split(&labels, cfg.eval.test_fraction, cfg.stage_seed("split"))?;
    let mut is_test = vec![false; records.len()];
    for &i in &test {
        is_test[i] = true;
    }
    // the lexicon only sees training labels
    let masked: Vec<FunctionRecord> = records
        .iter()
        .zip(&is_test)
        .map(|(r, &t)| FunctionRecord {
            label: if t { 0 } else { r.label },
            ..r.clone()
        })
        .collect();
    let lexicon = features::build_trimmed_lexicon(&masked, cfg.lexicon.lower_cut, cfg.lexicon.upper_cut_percentile)?;
    info!("trimmed lexicon holds {} tokens", lexicon.tokens.len());
    let rows = features::build_feature_matrix(&records, &embeddings, &sums, &lexicon)?;

    let split_of: HashMap<u64, bool> = records.iter().zip(&is_test).map(|(r, &t)| (r.id, t)).collect();
    write_with(ws.join(FEATURES), |p| features::write_features_csv(p, &rows))?;
    write_with(ws.join(LEXICON), |p| features::write_lexicon(p, &lexicon))?;
    atomic_write(&ws.join(SPLIT), |tmp| {
        let mut w = csv::Writer::from_path(tmp).map_err(Error::from)?;
        for r in &rows {
            w.serialize(SplitRow {
                function_id: r.function_id,
                split: if split_of[&r.function_id] { "test" } else { "train" }.to_string(),
                label: r.label,
            })
            .map_err(Error::from)?;
        }
        w.flush().map_err(|e| CliError::io(tmp, e))
    })
}

fn train_ids(ws: &Path) -> CliResult<std::collections::HashSet<u64>> {
    Ok(read_split(&ws.join(SPLIT))?
        .into_iter()
        .filter(|s| s.split == "train")
        .map(|s| s.function_id)
        .collect())
}

fn sample(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let rows = features::read_features_csv(&ws.join(FEATURES))?;
    let train = train_ids(ws)?;
    let train_rows: Vec<_> = rows.into_iter().filter(|r| train.contains(&r.function_id)).collect();
    let data = LabeledDataset::from_features(&train_rows);
    let sampled = sampling::smote(&data, cfg.smote.synth_percent, cfg.smote.k, cfg.stage_seed("sample"))?;
    info!(
        "{} training rows, {} synthetic positives added",
        sampled.len(),
        sampled.synthetic_count()
    );
    write_with(ws.join(SAMPLED), |p| sampling::write_dataset_csv(p, &sampled))
}

fn train(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let data = sampling::read_dataset_csv(&ws.join(SAMPLED))?;
    let model = classify::train(&cfg.model_spec(), &data)?;
    write_with(ws.join(MODEL), |p| model.save(p))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRow {
    pub function_id: u64,
    pub score: f64,
}

pub fn read_scores(path: &Path) -> CliResult<Vec<ScoreRow>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::from)?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<ScoreRow>, _>>()
        .map_err(Error::from)?;
    Ok(rows)
}

fn score(ws: &Path) -> CliResult<()> {
    let model = TrainedModel::load(&ws.join(MODEL))?;
    let rows = features::read_features_csv(&ws.join(FEATURES))?;
    let values: Vec<Vec<f64>> = rows.iter().map(|r| r.values()).collect();
    let scores = classify::predict_scores(&model, &values)?;
    atomic_write(&ws.join(SCORES), |tmp| {
        let mut w = csv::Writer::from_path(tmp).map_err(Error::from)?;
        for (r, s) in rows.iter().zip(scores) {
            w.serialize(ScoreRow {
                function_id: r.function_id,
                score: s,
            })
            .map_err(Error::from)?;
        }
        w.flush().map_err(|e| CliError::io(tmp, e))
    })
}

/// Scores and labels of the held-out test split.
pub fn test_split_scores(ws: &Path) -> CliResult<(Vec<f64>, Vec<u8>)> {
    let scores: HashMap<u64, f64> = read_scores(&ws.join(SCORES))?
        .into_iter()
        .map(|r| (r.function_id, r.score))
        .collect();
    let mut s = Vec::new();
    let mut l = Vec::new();
    for row in read_split(&ws.join(SPLIT))? {
        if row.split == "test" {
            let v = scores.get(&row.function_id).ok_or_else(|| {
                Error::Contract(format!("no score for test function {}", row.function_id))
            })?;
            s.push(*v);
            l.push(row.label);
        }
    }
    Ok((s, l))
}

fn evaluate(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let (scores, labels) = test_split_scores(ws)?;
    let report = classify::evaluate(&scores, &labels, cfg.eval.threshold)?;
    match report.auc {
        Some(auc) => info!("test AUC {auc:.4} on {} functions", report.n),
        None => warn!("test split has a single class; AUC undefined"),
    }
    write_with(ws.join(EVAL_REPORT), |p| report.write_json(p))?;
    write_with(ws.join(GAIN_CURVE), |p| classify::write_gain_curve_csv(p, &report.gain_curve))
}

fn write_report(cfg: &PipelineConfig, ws: &Path) -> CliResult<()> {
    let records = corpus::read_records_jsonl(&ws.join(FUNCTIONS))?;
    let by_id: HashMap<u64, f64> = read_scores(&ws.join(SCORES))?
        .into_iter()
        .map(|r| (r.function_id, r.score))
        .collect();
    let scores = records
        .iter()
        .map(|r| {
            by_id
                .get(&r.id)
                .copied()
                .ok_or_else(|| Error::Contract(format!("no score for function {}", r.id)))
        })
        .collect::<vulnrank_core::Result<Vec<f64>>>()?;
    let ranking = classify::rank_report(&records, &scores)?;
    let eval = EvalReport::read_json(&ws.join(EVAL_REPORT))?;
    let embeddings = lm::read_embeddings_csv(&ws.join(EMBEDDINGS))?;
    let cluster: Vec<u64> = ranking
        .ranked
        .iter()
        .take(cfg.report.cluster_size)
        .map(|r| r.function_id)
        .collect();
    let matrix = similarity::pairwise_submatrix(&embeddings, &cluster)?;
    let text = report::render(&ranking, &eval, &matrix, &cfg.report);
    atomic_write(&ws.join(REPORT), |tmp| fs::write(tmp, &text).map_err(|e| CliError::io(tmp, e)))?;
    atomic_write(&ws.join(RANKING), |tmp| {
        let mut w = csv::Writer::from_path(tmp).map_err(Error::from)?;
        for r in &ranking.ranked {
            w.serialize(r).map_err(Error::from)?;
        }
        w.flush().map_err(|e| CliError::io(tmp, e))
    })
}
