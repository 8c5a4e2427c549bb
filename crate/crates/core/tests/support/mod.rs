//! Brute-force oracles shared by integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

/// Exhaustive BPE: recount every adjacent pair each step, take the highest
/// count with ties to the smallest (left, right), stop below a count of 2.
pub fn bpe_oracle(words: &BTreeMap<String, u64>, num_merges: usize) -> Vec<(String, String)> {
    let mut segs: Vec<(Vec<String>, u64)> = words
        .iter()
        .map(|(w, &c)| (w.chars().map(String::from).collect(), c))
        .collect();
    let mut merges = Vec::new();
    for _ in 0..num_merges {
        let mut counts: HashMap<(String, String), u64> = HashMap::new();
        for (s, c) in &segs {
            for w in s.windows(2) {
                *counts.entry((w[0].clone(), w[1].clone())).or_insert(0) += c;
            }
        }
        let best = counts
            .into_iter()
            .filter(|(_, c)| *c >= 2)
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)));
        let Some(((l, r), _)) = best else {
            break;
        };
        for (s, _) in &mut segs {
            let mut out = Vec::with_capacity(s.len());
            let mut i = 0;
            while i < s.len() {
                if i + 1 < s.len() && s[i] == l && s[i + 1] == r {
                    out.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    out.push(s[i].clone());
                    i += 1;
                }
            }
            *s = out;
        }
        merges.push((l, r));
    }
    merges
}

/// Concordant pairs over all positive/negative pairs, ties counting half.
pub fn auc_by_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] == 1 && labels[j] == 0 {
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

/// O(N^2) cosine row sums with no blocking.
pub fn naive_row_sums(rows: &[Vec<f64>]) -> Vec<f64> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    rows.iter()
        .map(|u| {
            rows.iter()
                .map(|v| {
                    let (nu, nv) = (norm(u), norm(v));
                    if nu == 0.0 || nv == 0.0 {
                        0.0
                    } else {
                        (u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv)).clamp(-1.0, 1.0)
                    }
                })
                .sum()
        })
        .collect()
}

/// Best accuracy any linear rule `w.x + b >= 0` reaches on the 4 XOR points,
/// searched over a grid of directions and offsets.
pub fn best_linear_xor_accuracy() -> f64 {
    let points = [([0.0, 0.0], 0u8), ([0.0, 1.0], 1), ([1.0, 0.0], 1), ([1.0, 1.0], 0)];
    let mut best = 0.0f64;
    for k in 0..720 {
        let theta = k as f64 * std::f64::consts::PI / 360.0;
        let (w0, w1) = (theta.cos(), theta.sin());
        for j in -300..=300 {
            let b = j as f64 / 100.0;
            let hits = points
                .iter()
                .filter(|(x, y)| u8::from(w0 * x[0] + w1 * x[1] + b >= 0.0) == *y)
                .count();
            best = best.max(hits as f64 / 4.0);
        }
    }
    best
}

/// BOS, then `len` tokens cycling through ids 4, 5, 6, then EOS.
pub fn repeating_corpus(n: usize, len: usize) -> Vec<vulnrank_core::TokenSequence> {
    use vulnrank_core::bpe::{BOS, EOS};
    (0..n)
        .map(|i| {
            let mut ids = vec![BOS];
            ids.extend((0..len).map(|k| 4 + (k % 3) as u32));
            ids.push(EOS);
            vulnrank_core::TokenSequence { function_id: i as u64, ids }
        })
        .collect()
}
