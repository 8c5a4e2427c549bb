//! Class rebalancing: SMOTE, bootstrap balancing and stratified splits.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{feature_header, FeatureRow};

pub const DEFAULT_SYNTH_PERCENT: f64 = 20.0;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Real,
    Synthetic,
}

impl Provenance {
    fn as_str(self) -> &'static str {
        match self {
            Provenance::Real => "real",
            Provenance::Synthetic => "synthetic",
        }
    }
}

/// Feature rows with labels and a real/synthetic flag per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub function_ids: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub provenance: Vec<Provenance>,
    /// Row indices of the two real minority rows a synthetic row was
    /// interpolated from. `None` for real rows and for rows read from disk.
    pub parents: Vec<Option<(usize, usize)>>,
}

impl LabeledDataset {
    pub fn from_features(rows: &[FeatureRow]) -> Self {
        let mut ds = LabeledDataset::default();
        for r in rows {
            ds.push(r.function_id, r.values(), r.label, Provenance::Real, None);
        }
        ds
    }

    pub fn push(&mut self, id: u64, row: Vec<f64>, label: u8, provenance: Provenance, parents: Option<(usize, usize)>) {
        self.function_ids.push(id);
        self.rows.push(row);
        self.labels.push(label);
        self.provenance.push(provenance);
        self.parents.push(parents);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }

    pub fn synthetic_count(&self) -> usize {
        self.provenance
            .iter()
            .filter(|&&p| p == Provenance::Synthetic)
            .count()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut ds = LabeledDataset::default();
        for &i in indices {
            ds.push(self.function_ids[i], self.rows[i].clone(), self.labels[i], self.provenance[i], None);
        }
        ds
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Number of synthetic rows that makes them `percent`% of the final total.
pub fn synthetic_target(total_rows: usize, percent: f64) -> usize {
    if percent <= 0.0 {
        return 0;
    }
    let raw = percent * total_rows as f64 / (100.0 - percent);
    (raw - 1e-9).ceil().max(0.0) as usize
}

/// Appends SMOTE rows until synthetic rows are `synth_percent`% of the result.
///
/// Each synthetic row is `x + lambda * (nn - x)` with `x` a uniformly chosen
/// real minority (label 1) row, `nn` one of its `k` nearest real minority
/// neighbours by Euclidean distance (ties by row order) and
/// `lambda ~ U[0, 1)`. Real rows are never modified.
pub fn smote(data: &LabeledDataset, synth_percent: f64, k: usize, seed: u64) -> Result<LabeledDataset> {
    if !(0.0..100.0).contains(&synth_percent) {
        return Err(Error::Config(format!(
            "synth_percent must lie in [0, 100), got {synth_percent}"
        )));
    }
    let mut out = data.clone();
    let target = synthetic_target(data.len(), synth_percent);
    if target == 0 {
        return Ok(out);
    }
    if k == 0 {
        return Err(Error::Config("SMOTE needs k >= 1".into()));
    }
    let minority: Vec<usize> = (0..data.len())
        .filter(|&i| data.labels[i] == 1 && data.provenance[i] == Provenance::Real)
        .collect();
    if minority.len() < k + 1 {
        return Err(Error::Data(format!(
            "SMOTE with k={k} needs at least {} minority rows, found {}; use a smaller k",
            k + 1,
            minority.len()
        )));
    }

    let neighbours: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let mut others: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (dist_sq(&data.rows[i], &data.rows[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_id = data.function_ids.iter().copied().max().map_or(0, |m| m + 1);
    for _ in 0..target {
        let pick = rng.gen_range(0..minority.len());
        let base = minority[pick];
        let nn = neighbours[pick][rng.gen_range(0..k)];
        let lambda: f64 = rng.gen();
        let row: Vec<f64> = data.rows[base]
            .iter()
            .zip(&data.rows[nn])
            .map(|(x, y)| x + lambda * (y - x))
            .collect();
        out.push(next_id, row, 1, Provenance::Synthetic, Some((base, nn)));
        next_id += 1;
    }
    Ok(out)
}

/// `rounds` datasets, each with every positive row plus an equal number of
/// negatives drawn uniformly with replacement.
pub fn bootstrap_balance(data: &LabeledDataset, rounds: usize, seed: u64) -> Result<Vec<LabeledDataset>> {
    let pos: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == 1).collect();
    let neg: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] != 1).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Data("bootstrap balancing needs both classes".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..rounds)
        .map(|_| {
            let mut idx = pos.clone();
            idx.extend((0..pos.len()).map(|_| neg[rng.gen_range(0..neg.len())]));
            data.subset(&idx)
        })
        .collect())
}

/// Stratified split: each class is shuffled with `seed` and
/// `ceil(test_fraction * class_size)` of it goes to the test side.
/// Returns sorted `(train, test)` index lists.
pub fn stratified_split(labels: &[u8], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!(
            "test fraction must lie in [0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (test_fraction * idx.len() as f64 - 1e-9).ceil().max(0.0) as usize;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Feature-matrix CSV with a trailing `provenance` column.
pub fn write_dataset_csv(path: &Path, data: &LabeledDataset) -> Result<()> {
    let dim = data.width().saturating_sub(5);
    let mut out = feature_header(dim);
    out.push_str(",provenance\n");
    for i in 0..data.len() {
        let mut line = data.function_ids[i].to_string();
        for v in &data.rows[i] {
            let _ = write!(line, ",{v}");
        }
        let _ = writeln!(line, ",{},{}", data.labels[i], data.provenance[i].as_str());
        out.push_str(&line);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_dataset_csv(path: &Path) -> Result<LabeledDataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let width = reader.headers()?.len();
    if width < 8 {
        return Err(Error::Data(format!("{}: dataset header too short", path.display())));
    }
    let mut ds = LabeledDataset::default();
    for (n, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Data(format!("{} row {}: malformed", path.display(), n + 2));
        let fields: Vec<&str> = rec.iter().collect();
        if fields.len() != width {
            return Err(bad());
        }
        let id = fields[0].parse().map_err(|_| bad())?;
        let row = fields[1..width - 2]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        let label = fields[width - 2].parse().map_err(|_| bad())?;
        let prov = match fields[width - 1] {
            "real" => Provenance::Real,
            "synthetic" => Provenance::Synthetic,
            _ => return Err(bad()),
        };
        ds.push(id, row, label, prov, None);
    }
    Ok(ds)
}
