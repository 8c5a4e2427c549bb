//! Soft classifiers estimating P(y = 1 | x) and their evaluation.

pub mod gbm;
pub mod linear;
mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::LabeledDataset;

pub use metrics::{
    area_under_gain, auc, evaluate, gain_curve, rank_report, top_percent_capture, write_gain_curve_csv,
    EvalReport, PercentileCapture, RankedFunction, RiskReport, DEFAULT_PERCENTILES,
};

pub const MODEL_FORMAT: &str = "vulnrank-model-1";

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss of raw scores against 0/1 targets.
pub(crate) fn log_loss(raw: &[f64], y: &[f64]) -> f64 {
    let total: f64 = raw
        .iter()
        .zip(y)
        .map(|(&s, &t)| {
            // log(1 + e^s) - t*s, computed stably
            let softplus = if s > 0.0 { s + (-s).exp().ln_1p() } else { s.exp().ln_1p() };
            softplus - t * s
        })
        .sum();
    total / raw.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbm,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbmParams {
    pub num_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            num_trees: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            iterations: 500,
            learning_rate: 0.5,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub gbm: GbmParams,
    #[serde(default)]
    pub linear: LinearParams,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Gbm,
            gbm: GbmParams::default(),
            linear: LinearParams::default(),
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            ModelKind::Gbm => {
                self.gbm.max_depth > 0
                    && self.gbm.min_leaf > 0
                    && self.gbm.learning_rate > 0.0
                    && self.gbm.learning_rate.is_finite()
            }
            ModelKind::Linear => {
                self.linear.learning_rate > 0.0 && self.linear.learning_rate.is_finite() && self.linear.l2 >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid model hyperparameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelState {
    Gbm(gbm::GbmModel),
    Linear(linear::LinearModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub spec: ModelSpec,
    pub feature_width: usize,
    pub state: ModelState,
}

/// Fits the model named by `spec.kind`.
pub fn train(spec: &ModelSpec, data: &LabeledDataset) -> Result<TrainedModel> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let width = data.width();
    for (i, row) in data.rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::Data(format!("row {i} has width {}, expected {width}", row.len())));
        }
        if let Some(k) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "row {i} (function {}) has a non-finite value in column {k}",
                data.function_ids[i]
            )));
        }
    }
    if data.labels.iter().any(|&l| l > 1) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    let pos = data.positives();
    if pos == 0 || pos == data.len() {
        return Err(Error::Data("training data contains a single class".into()));
    }
    let state = match spec.kind {
        ModelKind::Gbm => ModelState::Gbm(gbm::fit(&data.rows, &data.labels, &spec.gbm)),
        ModelKind::Linear => ModelState::Linear(linear::fit(&data.rows, &data.labels, &spec.linear)),
    };
    Ok(TrainedModel {
        format: MODEL_FORMAT.to_string(),
        spec: spec.clone(),
        feature_width: width,
        state,
    })
}

impl TrainedModel {
    fn check_width(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.feature_width {
            return Err(Error::Contract(format!(
                "row width {} does not match model width {}",
                row.len(),
                self.feature_width
            )));
        }
        Ok(())
    }

    /// Score before the logistic link.
    pub fn raw_score(&self, row: &[f64]) -> Result<f64> {
        self.check_width(row)?;
        Ok(match &self.state {
            ModelState::Gbm(m) => m.raw_score(row),
            ModelState::Linear(m) => m.raw_score(row),
        })
    }

    /// Per-tree training log-loss for GBM models.
    pub fn train_loss(&self) -> Option<&[f64]> {
        match &self.state {
            ModelState::Gbm(m) => Some(&m.train_loss),
            ModelState::Linear(_) => None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: TrainedModel = serde_json::from_str(&text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Data(format!(
                "{}: unsupported model format `{}`",
                path.display(),
                model.format
            )));
        }
        Ok(model)
    }
}

/// Probabilities in (0, 1) through the logistic link.
pub fn predict_scores(model: &TrainedModel, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    rows.iter()
        .map(|r| model.raw_score(r).map(sigmoid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Provenance;

    fn dataset(rows: &[(Vec<f64>, u8)]) -> LabeledDataset {
        let mut ds = LabeledDataset::default();
        for (i, (r, l)) in rows.iter().enumerate() {
            ds.push(i as u64, r.clone(), *l, Provenance::Real, None);
        }
        ds
    }

    fn xor() -> LabeledDataset {
        dataset(&[
            (vec![0.0, 0.0], 0),
            (vec![0.0, 1.0], 1),
            (vec![1.0, 0.0], 1),
            (vec![1.0, 1.0], 0),
        ])
    }

    fn accuracy(model: &TrainedModel, ds: &LabeledDataset) -> f64 {
        let s = predict_scores(model, &ds.rows).unwrap();
        let hits = s
            .iter()
            .zip(&ds.labels)
            .filter(|(&p, &l)| u8::from(p >= 0.5) == l)
            .count();
        hits as f64 / ds.len() as f64
    }

    fn gbm(trees: usize, depth: usize, min_leaf: usize) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::Gbm,
            gbm: GbmParams {
                num_trees: trees,
                max_depth: depth,
                learning_rate: 0.1,
                min_leaf,
            },
            ..ModelSpec::default()
        }
    }

    #[test]
    fn gbm_separates_a_separable_set() {
        let rows: Vec<(Vec<f64>, u8)> = (0..40)
            .map(|i| {
                let x = i as f64 / 4.0;
                let y = ((i * 7) % 11) as f64;
                (vec![x, y], u8::from(x + 0.1 * y > 6.0))
            })
            .collect();
        let ds = dataset(&rows);
        let m = train(&gbm(50, 2, 1), &ds).unwrap();
        assert_eq!(accuracy(&m, &ds), 1.0);
    }

    #[test]
    fn xor_needs_depth_two() {
        let ds = xor();
        let deep = train(&gbm(50, 2, 1), &ds).unwrap();
        assert_eq!(accuracy(&deep, &ds), 1.0);
        let lin = train(
            &ModelSpec {
                kind: ModelKind::Linear,
                ..ModelSpec::default()
            },
            &ds,
        )
        .unwrap();
        assert!(accuracy(&lin, &ds) <= 0.75);
    }

    #[test]
    fn zero_rounds_score_the_base_rate() {
        let ds = dataset(&[(vec![0.0], 1), (vec![1.0], 0), (vec![2.0], 0), (vec![3.0], 0)]);
        let m = train(&gbm(0, 2, 1), &ds).unwrap();
        for s in predict_scores(&m, &[vec![-5.0], vec![10.0]]).unwrap() {
            assert!((s - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_never_increases() {
        let rows: Vec<(Vec<f64>, u8)> = (0..200)
            .map(|i| {
                let a = ((i * 37) % 101) as f64 / 101.0;
                let b = ((i * 53) % 97) as f64 / 97.0;
                (vec![a, b, a * b], u8::from((a - 0.5) * (b - 0.3) > 0.02 || i % 17 == 0))
            })
            .collect();
        let m = train(&gbm(60, 3, 3), &dataset(&rows)).unwrap();
        let loss = m.train_loss().unwrap();
        assert_eq!(loss.len(), 61);
        for w in loss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn rejects_bad_data() {
        let one_class = dataset(&[(vec![0.0], 1), (vec![1.0], 1)]);
        assert!(matches!(train(&gbm(5, 2, 1), &one_class), Err(Error::Data(_))));
        let nan = dataset(&[(vec![f64::NAN], 1), (vec![1.0], 0)]);
        let err = train(&gbm(5, 2, 1), &nan).unwrap_err().to_string();
        assert!(err.contains("row 0"));
        let m = train(&gbm(5, 2, 1), &xor()).unwrap();
        assert!(matches!(predict_scores(&m, &[vec![1.0]]), Err(Error::Contract(_))));
    }

    #[test]
    fn scores_are_probabilities_and_deterministic() {
        let m = train(&gbm(30, 2, 1), &xor()).unwrap();
        let s = predict_scores(&m, &[vec![0.0, 1.0], vec![0.0, 1.0], vec![9.0, -9.0]]).unwrap();
        assert!(s.iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(s[0], s[1]);
        assert_eq!(train(&gbm(30, 2, 1), &xor()).unwrap(), m);
    }

    #[test]
    fn model_file_round_trips_bit_for_bit() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<(Vec<f64>, u8)> = (0..50)
            .map(|i| (vec![(i as f64).sin(), (i as f64 * 0.37).cos()], u8::from(i % 3 == 0)))
            .collect();
        let ds = dataset(&rows);
        for spec in [gbm(20, 3, 2), ModelSpec { kind: ModelKind::Linear, ..ModelSpec::default() }] {
            let m = train(&spec, &ds).unwrap();
            let path = dir.path().join("m.json");
            m.save(&path).unwrap();
            let back = TrainedModel::load(&path).unwrap();
            assert_eq!(back, m);
            let a = predict_scores(&m, &ds.rows).unwrap();
            let b = predict_scores(&back, &ds.rows).unwrap();
            assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
}
