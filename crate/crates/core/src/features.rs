//! Heuristic features and the d+5 feature matrix.
//!
//! All heuristics count pre-BPE word tokens (see [`crate::bpe::pretokenize`]).
//! Column order of a feature row: embedding dims, fn_length,
//! token_prevalence, row_sum, longest_line, param_count, then the label.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::bpe::{pretokenize, pretokenize_lines};
use crate::corpus::FunctionRecord;
use crate::error::{Error, Result};
use crate::lm::FunctionEmbedding;
use crate::similarity::CosineRowSums;

pub const HEURISTIC_COLUMNS: [&str; 5] = [
    "fn_length",
    "token_prevalence",
    "row_sum",
    "longest_line",
    "param_count",
];

pub const DEFAULT_LOWER_CUT: u64 = 3;
pub const DEFAULT_UPPER_CUT_PERCENTILE: f64 = 99.0;

/// Tokens common in CVE-labeled functions once the rarest and the most
/// frequent corpus tokens are cut away.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimmedLexicon {
    pub tokens: BTreeSet<String>,
    pub lower_cut: u64,
    pub upper_cut_percentile: f64,
}

/// Number of word tokens in the body, with multiplicity.
pub fn function_length(record: &FunctionRecord) -> usize {
    pretokenize(&record.body).len()
}

/// Most word tokens on a single physical line of the body.
pub fn longest_line(record: &FunctionRecord) -> usize {
    let mut per_line: HashMap<usize, usize> = HashMap::new();
    for (_, line) in pretokenize_lines(&record.body) {
        *per_line.entry(line).or_insert(0) += 1;
    }
    per_line.values().copied().max().unwrap_or(0)
}

/// Builds the lexicon from the label-1 records of `records`.
///
/// A token is kept when it occurs at least `lower_cut` times across labeled
/// functions and its empirical CDF value in whole-corpus frequency
/// (percent of distinct corpus tokens at or below its count) does not exceed
/// `upper_cut_percentile`.
pub fn build_trimmed_lexicon(
    records: &[FunctionRecord],
    lower_cut: u64,
    upper_cut_percentile: f64,
) -> Result<TrimmedLexicon> {
    if !(0.0..=100.0).contains(&upper_cut_percentile) {
        return Err(Error::Config(format!(
            "upper_cut_percentile must lie in [0, 100], got {upper_cut_percentile}"
        )));
    }
    let mut corpus: HashMap<String, u64> = HashMap::new();
    let mut cve: HashMap<String, u64> = HashMap::new();
    let mut positives = 0usize;
    for rec in records {
        let words = pretokenize(&rec.body);
        if rec.label == 1 {
            positives += 1;
            for w in &words {
                *cve.entry(w.clone()).or_insert(0) += 1;
            }
        }
        for w in words {
            *corpus.entry(w).or_insert(0) += 1;
        }
    }
    if positives == 0 {
        return Err(Error::Data(
            "the trimmed CVE lexicon needs CVE-labeled functions; supply a label file that matches the corpus".into(),
        ));
    }

    let mut counts: Vec<u64> = corpus.values().copied().collect();
    counts.sort_unstable();
    let distinct = counts.len() as f64;
    let percentile = |count: u64| 100.0 * counts.partition_point(|&c| c <= count) as f64 / distinct;

    let tokens: BTreeSet<String> = cve
        .into_iter()
        .filter(|(t, c)| *c >= lower_cut && percentile(corpus[t]) <= upper_cut_percentile)
        .map(|(t, _)| t)
        .collect();
    if tokens.is_empty() {
        warn!("trimmed CVE lexicon is empty (lower_cut={lower_cut}, upper_cut={upper_cut_percentile})");
    }
    Ok(TrimmedLexicon {
        tokens,
        lower_cut,
        upper_cut_percentile,
    })
}

/// Distinct lexicon tokens present in the body divided by the body's token count.
pub fn token_prevalence(record: &FunctionRecord, lexicon: &TrimmedLexicon) -> f64 {
    let words = pretokenize(&record.body);
    if words.is_empty() {
        return 0.0;
    }
    let bag: BTreeSet<&str> = words.iter().map(String::as_str).collect();
    let hits = lexicon
        .tokens
        .iter()
        .filter(|t| bag.contains(t.as_str()))
        .count();
    hits as f64 / words.len() as f64
}

/// The five heuristics for one function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heuristics {
    pub function_id: u64,
    pub fn_length: usize,
    pub token_prevalence: f64,
    pub row_sum: f64,
    pub longest_line: usize,
    pub param_count: usize,
}

pub fn compute_heuristics(record: &FunctionRecord, lexicon: &TrimmedLexicon, row_sum: f64) -> Heuristics {
    Heuristics {
        function_id: record.id,
        fn_length: function_length(record),
        token_prevalence: token_prevalence(record, lexicon),
        row_sum,
        longest_line: longest_line(record),
        param_count: record.param_count,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub function_id: u64,
    pub embedding: Vec<f64>,
    pub fn_length: usize,
    pub token_prevalence: f64,
    pub row_sum: f64,
    pub longest_line: usize,
    pub param_count: usize,
    pub label: u8,
}

impl FeatureRow {
    /// Numeric features in column order, width d + 5.
    pub fn values(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.embedding.len() + 5);
        v.extend_from_slice(&self.embedding);
        v.extend([
            self.fn_length as f64,
            self.token_prevalence,
            self.row_sum,
            self.longest_line as f64,
            self.param_count as f64,
        ]);
        v
    }

    pub fn width(&self) -> usize {
        self.embedding.len() + 5
    }
}

pub fn assemble_features(embedding: &FunctionEmbedding, heuristics: &Heuristics, label: u8) -> Result<FeatureRow> {
    if embedding.function_id != heuristics.function_id {
        return Err(Error::Contract(format!(
            "embedding for function {} joined with heuristics for function {}",
            embedding.function_id, heuristics.function_id
        )));
    }
    if embedding.vector.iter().any(|v| !v.is_finite()) || !heuristics.row_sum.is_finite() {
        return Err(Error::Data(format!(
            "non-finite feature for function {}",
            embedding.function_id
        )));
    }
    Ok(FeatureRow {
        function_id: embedding.function_id,
        embedding: embedding.vector.clone(),
        fn_length: heuristics.fn_length,
        token_prevalence: heuristics.token_prevalence,
        row_sum: heuristics.row_sum,
        longest_line: heuristics.longest_line,
        param_count: heuristics.param_count,
        label,
    })
}

/// Joins records, embeddings and row sums by function id; rows come out in id order.
pub fn build_feature_matrix(
    records: &[FunctionRecord],
    embeddings: &[FunctionEmbedding],
    row_sums: &CosineRowSums,
    lexicon: &TrimmedLexicon,
) -> Result<Vec<FeatureRow>> {
    let emb: HashMap<u64, &FunctionEmbedding> = embeddings.iter().map(|e| (e.function_id, e)).collect();
    let sums: HashMap<u64, f64> = row_sums
        .function_ids
        .iter()
        .copied()
        .zip(row_sums.sums.iter().copied())
        .collect();
    let mut rows = Vec::with_capacity(records.len());
    for rec in records {
        let e = emb
            .get(&rec.id)
            .ok_or_else(|| Error::Contract(format!("no embedding for function {}", rec.id)))?;
        let s = *sums
            .get(&rec.id)
            .ok_or_else(|| Error::Contract(format!("no row sum for function {}", rec.id)))?;
        rows.push(assemble_features(e, &compute_heuristics(rec, lexicon, s), rec.label)?);
    }
    rows.sort_by_key(|r| r.function_id);
    Ok(rows)
}

pub fn feature_header(dim: usize) -> String {
    let mut h = String::from("function_id");
    for k in 1..=dim {
        let _ = write!(h, ",e{k}");
    }
    for c in HEURISTIC_COLUMNS {
        let _ = write!(h, ",{c}");
    }
    h.push_str(",label");
    h
}

pub fn feature_line(row: &FeatureRow) -> String {
    let mut line = row.function_id.to_string();
    for v in &row.embedding {
        let _ = write!(line, ",{v}");
    }
    let _ = write!(
        line,
        ",{},{},{},{},{},{}",
        row.fn_length, row.token_prevalence, row.row_sum, row.longest_line, row.param_count, row.label
    );
    line
}

pub fn write_features_csv(path: &Path, rows: &[FeatureRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.embedding.len());
    let mut out = feature_header(dim);
    out.push('\n');
    for r in rows {
        out.push_str(&feature_line(r));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub(crate) fn parse_feature_fields(fields: &[&str], dim: usize, ctx: &str) -> Result<FeatureRow> {
    let bad = |what: &str| Error::Data(format!("{ctx}: bad {what}"));
    if fields.len() < dim + 7 {
        return Err(bad("row width"));
    }
    let embedding = fields[1..=dim]
        .iter()
        .map(|f| f.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| bad("embedding value"))?;
    let h = &fields[dim + 1..];
    Ok(FeatureRow {
        function_id: fields[0].parse().map_err(|_| bad("function_id"))?,
        embedding,
        fn_length: h[0].parse().map_err(|_| bad("fn_length"))?,
        token_prevalence: h[1].parse().map_err(|_| bad("token_prevalence"))?,
        row_sum: h[2].parse().map_err(|_| bad("row_sum"))?,
        longest_line: h[3].parse().map_err(|_| bad("longest_line"))?,
        param_count: h[4].parse().map_err(|_| bad("param_count"))?,
        label: h[5].parse().map_err(|_| bad("label"))?,
    })
}

pub fn read_features_csv(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let dim = header.len().checked_sub(7).ok_or_else(|| {
        Error::Data(format!("{}: feature header too short", path.display()))
    })?;
    if header.iter().collect::<Vec<_>>().join(",") != feature_header(dim) {
        return Err(Error::Data(format!("{}: unexpected feature header", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(parse_feature_fields(&fields, dim, &format!("{} row {}", path.display(), i + 2))?);
    }
    Ok(rows)
}

pub fn write_lexicon(path: &Path, lexicon: &TrimmedLexicon) -> Result<()> {
    let text = serde_json::to_string_pretty(lexicon)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_lexicon(path: &Path) -> Result<TrimmedLexicon> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
