//! Gradient boosting on logistic loss with greedy variance-reduction trees.

use serde::{Deserialize, Serialize};

use super::{log_loss, sigmoid, GbmParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    /// Log-odds of the training base rate.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    /// Mean training log-loss before the first round and after each round.
    pub train_loss: Vec<f64>,
}

impl GbmModel {
    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score
            + self
                .trees
                .iter()
                .map(|t| self.learning_rate * t.predict(row))
                .sum::<f64>()
    }
}

struct Builder<'a> {
    rows: &'a [Vec<f64>],
    residual: &'a [f64],
    hessian: &'a [f64],
    params: &'a GbmParams,
    nodes: Vec<Node>,
    go_left: Vec<bool>,
}

impl Builder<'_> {
    fn leaf(&mut self, members: &[usize]) -> usize {
        let g: f64 = members.iter().map(|&i| self.residual[i]).sum();
        let h: f64 = members.iter().map(|&i| self.hessian[i]).sum();
        let value = if h > 1e-12 { g / h } else { 0.0 };
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    /// `sorted[f]` holds this node's rows ordered by feature f.
    fn build(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let members = &sorted[0];
        let n = members.len();
        let min_leaf = self.params.min_leaf.max(1);
        let sum: f64 = members.iter().map(|&i| self.residual[i]).sum();
        let sum_sq: f64 = members.iter().map(|&i| self.residual[i] * self.residual[i]).sum();
        let spread = sum_sq - sum * sum / n as f64;
        if depth >= self.params.max_depth || n < 2 * min_leaf || spread <= 1e-12 * n as f64 {
            let m = members.clone();
            return self.leaf(&m);
        }

        let base = sum * sum / n as f64;
        // (gain, feature, threshold); ties keep the lowest feature, then lowest threshold
        let mut best: Option<(f64, usize, f64)> = None;
        for (f, order) in sorted.iter().enumerate() {
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                let i = order[pos];
                left_sum += self.residual[i];
                let nl = pos + 1;
                let nr = n - nl;
                if nl < min_leaf {
                    continue;
                }
                if nr < min_leaf {
                    break;
                }
                let (a, b) = (self.rows[i][f], self.rows[order[pos + 1]][f]);
                if a >= b {
                    continue;
                }
                let right_sum = sum - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
                if best.is_none_or(|(g, _, _)| gain > g + 1e-12) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((gain, f, threshold));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else {
            let m = members.clone();
            return self.leaf(&m);
        };
        if gain < -1e-12 {
            let m = members.clone();
            return self.leaf(&m);
        }

        for &i in members {
            self.go_left[i] = self.rows[i][feature] <= threshold;
        }
        let mut left_sorted = Vec::with_capacity(sorted.len());
        let mut right_sorted = Vec::with_capacity(sorted.len());
        for order in &sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.iter().partition(|&&i| self.go_left[i]);
            left_sorted.push(l);
            right_sorted.push(r);
        }
        drop(sorted);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let left = self.build(left_sorted, depth + 1);
        let right = self.build(right_sorted, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

/// Boosts `params.num_trees` trees; callers have validated the data.
pub(crate) fn fit(rows: &[Vec<f64>], labels: &[u8], params: &GbmParams) -> GbmModel {
    let n = rows.len();
    let width = rows[0].len();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let rate = y.iter().sum::<f64>() / n as f64;
    let base_score = (rate / (1.0 - rate)).ln();
    let mut raw = vec![base_score; n];
    let mut train_loss = vec![log_loss(&raw, &y)];

    let presorted: Vec<Vec<usize>> = (0..width)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]).then(a.cmp(&b)));
            idx
        })
        .collect();

    let mut trees = Vec::with_capacity(params.num_trees);
    let mut residual = vec![0.0; n];
    let mut hessian = vec![0.0; n];
    for _ in 0..params.num_trees {
        for i in 0..n {
            let p = sigmoid(raw[i]);
            residual[i] = y[i] - p;
            hessian[i] = p * (1.0 - p);
        }
        let mut builder = Builder {
            rows,
            residual: &residual,
            hessian: &hessian,
            params,
            nodes: Vec::new(),
            go_left: vec![false; n],
        };
        builder.build(presorted.clone(), 0);
        let tree = Tree { nodes: builder.nodes };
        for (r, row) in raw.iter_mut().zip(rows) {
            *r += params.learning_rate * tree.predict(row);
        }
        train_loss.push(log_loss(&raw, &y));
        trees.push(tree);
    }
    GbmModel {
        base_score,
        learning_rate: params.learning_rate,
        trees,
        train_loss,
    }
}
