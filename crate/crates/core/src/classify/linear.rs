//! L2-regularized logistic regression on standardized features.

use serde::{Deserialize, Serialize};

use super::{sigmoid, LinearParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        let mut z = self.bias;
        for k in 0..row.len() {
            z += self.weights[k] * (row[k] - self.mean[k]) / self.scale[k];
        }
        z
    }
}

/// Full-batch gradient descent on mean log-loss plus `l2/2 * |w|^2`.
pub(crate) fn fit(rows: &[Vec<f64>], labels: &[u8], params: &LinearParams) -> LinearModel {
    let n = rows.len() as f64;
    let width = rows[0].len();
    let mut mean = vec![0.0; width];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n;
        }
    }
    let mut scale = vec![0.0; width];
    for r in rows {
        for k in 0..width {
            scale[k] += (r[k] - mean[k]).powi(2) / n;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..width).map(|k| (r[k] - mean[k]) / scale[k]).collect())
        .collect();

    let mut w = vec![0.0; width];
    let mut b = 0.0;
    let mut grad = vec![0.0; width];
    for _ in 0..params.iterations {
        grad.fill(0.0);
        let mut gb = 0.0;
        for (x, &y) in z.iter().zip(labels) {
            let s: f64 = b + w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
            let err = sigmoid(s) - f64::from(y);
            gb += err / n;
            for k in 0..width {
                grad[k] += err * x[k] / n;
            }
        }
        for k in 0..width {
            w[k] -= params.learning_rate * (grad[k] + params.l2 * w[k]);
        }
        b -= params.learning_rate * gb;
    }
    LinearModel {
        mean,
        scale,
        weights: w,
        bias: b,
    }
}
