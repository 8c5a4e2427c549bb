use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{check_ids, decode, loss_and_grad, run, softmax};
use super::{LmConfig, LmParameters, CLIP_NORM};
use crate::bpe::{TokenSequence, PAD};
use crate::error::{Error, Result};

/// Next-token metrics over a set of sequences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmMetrics {
    /// Mean cross-entropy in nats.
    pub loss: f64,
    pub accuracy: f64,
    pub perplexity: f64,
    pub positions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train: LmMetrics,
    pub heldout: Option<LmMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochMetrics>,
}

pub(crate) fn truncate(ids: &[u32], max_len: usize) -> &[u32] {
    &ids[..ids.len().min(max_len)]
}

/// Cross-entropy, accuracy and perplexity over every predicted position.
///
/// Argmax ties resolve to the lowest id.
pub fn evaluate_lm<S: AsRef<[u32]>>(params: &LmParameters, sequences: &[S]) -> Result<LmMetrics> {
    let (h, v) = (params.hidden_dim, params.vocab_size);
    let mut total = 0.0;
    let mut correct = 0usize;
    let mut positions = 0usize;
    let mut row = vec![0.0; v];
    for s in sequences {
        let ids = s.as_ref();
        check_ids(params, ids)?;
        if ids.len() < 2 {
            continue;
        }
        let trace = run(params, &ids[..ids.len() - 1]);
        for t in 0..ids.len() - 1 {
            let target = ids[t + 1] as usize;
            if target == PAD as usize {
                continue;
            }
            decode(params, &trace.hidden[t * h..(t + 1) * h], &mut row);
            let mut best = 0;
            for j in 1..v {
                if row[j] > row[best] {
                    best = j;
                }
            }
            softmax(&mut row);
            total -= row[target].ln();
            correct += usize::from(best == target);
            positions += 1;
        }
    }
    if positions == 0 {
        return Err(Error::Data("no predictable positions in sequences".into()));
    }
    let loss = total / positions as f64;
    Ok(LmMetrics {
        loss,
        accuracy: correct as f64 / positions as f64,
        perplexity: loss.exp(),
        positions,
    })
}

/// exp(mean cross-entropy over all predicted positions).
pub fn perplexity<S: AsRef<[u32]>>(params: &LmParameters, sequences: &[S]) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::Data("perplexity needs at least one sequence".into()));
    }
    Ok(evaluate_lm(params, sequences)?.perplexity)
}

/// Mini-batch SGD on next-token cross-entropy with global-norm clipping.
///
/// A `holdout_fraction` share of the sequences (chosen with the config seed)
/// is kept out of training and reported per epoch. Sequences longer than
/// `max_seq_len` are truncated. Epoch 0 in the history is the starting model.
pub fn train(
    mut params: LmParameters,
    sequences: &[TokenSequence],
    config: &LmConfig,
) -> Result<(LmParameters, TrainHistory)> {
    config.validate()?;
    params.check_shapes()?;
    if sequences.len() < 2 {
        return Err(Error::Data(format!(
            "language model training needs at least 2 sequences, got {}",
            sequences.len()
        )));
    }
    if params.vocab_size != config.vocab_size || params.hidden_dim != config.hidden_dim {
        return Err(Error::Contract("parameters do not match the LM config".into()));
    }
    let seqs: Vec<&[u32]> = sequences
        .iter()
        .map(|s| truncate(&s.ids, config.max_seq_len))
        .collect();
    for s in &seqs {
        check_ids(&params, s)?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = if config.holdout_fraction > 0.0 {
        ((config.holdout_fraction * seqs.len() as f64).round() as usize).clamp(1, seqs.len() - 1)
    } else {
        0
    };
    let heldout: Vec<&[u32]> = order[..n_hold].iter().map(|&i| seqs[i]).collect();
    let mut train_idx: Vec<usize> = order[n_hold..].to_vec();
    train_idx.sort_unstable();
    let train_set: Vec<&[u32]> = train_idx.iter().map(|&i| seqs[i]).collect();

    let snapshot = |params: &LmParameters, epoch: usize| -> Result<EpochMetrics> {
        Ok(EpochMetrics {
            epoch,
            train: evaluate_lm(params, &train_set)?,
            heldout: if heldout.is_empty() {
                None
            } else {
                Some(evaluate_lm(params, &heldout)?)
            },
        })
    };

    let mut history = TrainHistory::default();
    history.epochs.push(snapshot(&params, 0)?);
    let mut batch_order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=config.epochs {
        batch_order.shuffle(&mut rng);
        for (b, chunk) in batch_order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&[u32]> = chunk.iter().map(|&i| train_set[i]).collect();
            let (loss, mut grad, positions) = loss_and_grad(&params, &batch)?;
            if positions == 0 {
                continue;
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let norm = grad.norm_sq().sqrt();
            if norm > CLIP_NORM {
                grad.scale(CLIP_NORM / norm);
            }
            params.add_scaled(&grad, -config.learning_rate);
        }
        if !params.all_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: batch_order.len().div_ceil(config.batch_size),
            });
        }
        history.epochs.push(snapshot(&params, epoch)?);
    }
    Ok((params, history))
}
