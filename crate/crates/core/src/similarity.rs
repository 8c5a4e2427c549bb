//! Cosine similarity between function embeddings.
//!
//! Row sums of the all-pairs cosine matrix are computed block by block so
//! the N x N matrix never exists in memory. Each row is accumulated in
//! ascending column order whatever the block size, so results do not depend
//! on blocking.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::FunctionEmbedding;

pub const DEFAULT_BLOCK_SIZE: usize = 1024;

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `u.v / (|u||v|)` clamped to [-1, 1]; 0 when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        warn!("cosine with a zero-norm vector, using 0");
        return 0.0;
    }
    (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
}

/// One row sum per function, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineRowSums {
    pub function_ids: Vec<u64>,
    pub sums: Vec<f64>,
}

fn unit_rows(rows: &[&[f64]]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut zero = vec![false; rows.len()];
    let units = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let n = dot(r, r).sqrt();
            if n == 0.0 {
                zero[i] = true;
                vec![0.0; r.len()]
            } else {
                r.iter().map(|x| x / n).collect()
            }
        })
        .collect();
    (units, zero)
}

/// `sums[i] = sum_j cosine(row_i, row_j)`, diagonal included.
pub fn cosine_row_sums(rows: &[&[f64]], block_size: usize) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Contract("row sums need at least one embedding".into()));
    }
    if block_size == 0 {
        return Err(Error::Contract("block_size must be at least 1".into()));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Contract("embeddings have inconsistent widths".into()));
    }
    let (units, zero) = unit_rows(rows);
    if zero.iter().any(|&z| z) {
        warn!(
            "{} zero-norm embeddings contribute cosine 0",
            zero.iter().filter(|&&z| z).count()
        );
    }
    let n = rows.len();
    let mut sums = vec![0.0; n];
    for ib in (0..n).step_by(block_size) {
        let iend = (ib + block_size).min(n);
        for jb in (0..n).step_by(block_size) {
            let jend = (jb + block_size).min(n);
            for i in ib..iend {
                let ui = &units[i];
                let mut acc = sums[i];
                for j in jb..jend {
                    let c = if i == j {
                        if zero[i] {
                            0.0
                        } else {
                            1.0
                        }
                    } else {
                        dot(ui, &units[j]).clamp(-1.0, 1.0)
                    };
                    acc += c;
                }
                sums[i] = acc;
            }
        }
    }
    Ok(sums)
}

/// Row sums keyed by function id.
pub fn embedding_row_sums(embeddings: &[FunctionEmbedding], block_size: usize) -> Result<CosineRowSums> {
    let rows: Vec<&[f64]> = embeddings.iter().map(|e| e.vector.as_slice()).collect();
    Ok(CosineRowSums {
        function_ids: embeddings.iter().map(|e| e.function_id).collect(),
        sums: cosine_row_sums(&rows, block_size)?,
    })
}

/// Symmetric cosine matrix over the chosen functions, unit diagonal.
pub fn pairwise_submatrix(embeddings: &[FunctionEmbedding], ids: &[u64]) -> Result<Vec<Vec<f64>>> {
    let index: HashMap<u64, usize> = embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| (e.function_id, i))
        .collect();
    let mut picked = Vec::with_capacity(ids.len());
    for id in ids {
        let &i = index
            .get(id)
            .ok_or_else(|| Error::Contract(format!("unknown function id {id}")))?;
        if picked.contains(&i) {
            return Err(Error::Contract(format!("function id {id} requested twice")));
        }
        picked.push(i);
    }
    let k = picked.len();
    let mut m = vec![vec![0.0; k]; k];
    for a in 0..k {
        m[a][a] = 1.0;
        for b in a + 1..k {
            let c = cosine(&embeddings[picked[a]].vector, &embeddings[picked[b]].vector);
            m[a][b] = c;
            m[b][a] = c;
        }
    }
    Ok(m)
}

/// CSV `function_id,row_sum`.
pub fn write_row_sums_csv(path: &Path, sums: &CosineRowSums) -> Result<()> {
    let mut out = String::from("function_id,row_sum\n");
    for (id, s) in sums.function_ids.iter().zip(&sums.sums) {
        let _ = writeln!(out, "{id},{s}");
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_row_sums_csv(path: &Path) -> Result<CosineRowSums> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = CosineRowSums {
        function_ids: Vec::new(),
        sums: Vec::new(),
    };
    for row in reader.deserialize::<(u64, f64)>() {
        let (id, s) = row?;
        out.function_ids.push(id);
        out.sums.push(s);
    }
    Ok(out)
}

/// Submatrix as CSV with function names as the header row and first column.
pub fn submatrix_csv(names: &[String], matrix: &[Vec<f64>]) -> String {
    let quote = |s: &str| {
        if s.contains([',', '"', '\n', '\t']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let mut out = String::from("function");
    for n in names {
        let _ = write!(out, ",{}", quote(n));
    }
    out.push('\n');
    for (n, row) in names.iter().zip(matrix) {
        out.push_str(&quote(n));
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
