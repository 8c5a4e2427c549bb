//! Single-layer LSTM next-token language model and function embeddings.
//!
//! Gate rows in the stacked LSTM matrices are ordered input, forget, cell
//! candidate, output. The decoder is stored hidden_dim x vocab_size.

mod io;
mod model;
mod train;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{params_from_str, params_to_string, read_embeddings_csv, read_params, write_embeddings_csv, write_params, PARAMS_VERSION};
pub use model::{embed_function, forward, loss_and_grad, Forward};
pub use train::{evaluate_lm, perplexity, train, EpochMetrics, LmMetrics, TrainHistory};

/// Embedding widths the pipeline is tuned for.
pub const PRESET_DIMS: [usize; 3] = [32, 64, 128];

/// Global gradient-norm clipping threshold.
pub const CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_seq_len: usize,
    pub seed: u64,
    /// Fraction of sequences held out for per-epoch validation metrics.
    pub holdout_fraction: f64,
}

impl LmConfig {
    /// A config with `hidden_dim = embed_dim = dim` and the usual defaults.
    pub fn new(vocab_size: usize, dim: usize) -> Self {
        LmConfig {
            vocab_size,
            embed_dim: dim,
            hidden_dim: dim,
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.5,
            max_seq_len: 256,
            seed: 0,
            holdout_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0
            || self.embed_dim == 0
            || self.hidden_dim == 0
            || self.batch_size == 0
            || self.max_seq_len < 2
        {
            return Err(Error::Config(format!("LM dimensions must be positive: {self:?}")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "LM learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!(
                "holdout_fraction must lie in [0, 1), got {}",
                self.holdout_fraction
            )));
        }
        if !PRESET_DIMS.contains(&self.embed_dim) {
            warn!("embedding width {} is not one of the presets {PRESET_DIMS:?}", self.embed_dim);
        }
        Ok(())
    }
}

/// Trainable state. Also used as the gradient container during training.
#[derive(Debug, Clone, PartialEq)]
pub struct LmParameters {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// vocab_size x embed_dim
    pub token_embedding: Vec<f64>,
    /// 4*hidden_dim x embed_dim
    pub w_input: Vec<f64>,
    /// 4*hidden_dim x hidden_dim
    pub w_hidden: Vec<f64>,
    /// 4*hidden_dim
    pub gate_bias: Vec<f64>,
    /// hidden_dim x vocab_size
    pub decoder: Vec<f64>,
    /// vocab_size
    pub decoder_bias: Vec<f64>,
}

/// Named parameter groups, in file order.
pub const GROUPS: [&str; 6] = [
    "token_embedding",
    "w_input",
    "w_hidden",
    "gate_bias",
    "decoder",
    "decoder_bias",
];

impl LmParameters {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        let g = 4 * hidden_dim;
        LmParameters {
            vocab_size,
            embed_dim,
            hidden_dim,
            token_embedding: vec![0.0; vocab_size * embed_dim],
            w_input: vec![0.0; g * embed_dim],
            w_hidden: vec![0.0; g * hidden_dim],
            gate_bias: vec![0.0; g],
            decoder: vec![0.0; hidden_dim * vocab_size],
            decoder_bias: vec![0.0; vocab_size],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size, self.embed_dim, self.hidden_dim)
    }

    /// (rows, cols) of each group, matching [`GROUPS`].
    pub fn shapes(&self) -> [(usize, usize); 6] {
        let g = 4 * self.hidden_dim;
        [
            (self.vocab_size, self.embed_dim),
            (g, self.embed_dim),
            (g, self.hidden_dim),
            (1, g),
            (self.hidden_dim, self.vocab_size),
            (1, self.vocab_size),
        ]
    }

    pub fn groups(&self) -> [&Vec<f64>; 6] {
        [
            &self.token_embedding,
            &self.w_input,
            &self.w_hidden,
            &self.gate_bias,
            &self.decoder,
            &self.decoder_bias,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.token_embedding,
            &mut self.w_input,
            &mut self.w_hidden,
            &mut self.gate_bias,
            &mut self.decoder,
            &mut self.decoder_bias,
        ]
    }

    /// Forget-gate slice of the gate bias.
    pub fn forget_bias(&self) -> &[f64] {
        &self.gate_bias[self.hidden_dim..2 * self.hidden_dim]
    }

    pub fn norm_sq(&self) -> f64 {
        self.groups().iter().flat_map(|g| g.iter()).map(|v| v * v).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.groups().iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    /// self += scale * other
    pub fn add_scaled(&mut self, other: &LmParameters, scale: f64) {
        for (dst, src) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.groups_mut() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        for ((name, (r, c)), g) in GROUPS.iter().zip(self.shapes()).zip(self.groups()) {
            if g.len() != r * c {
                return Err(Error::Contract(format!(
                    "parameter group {name} has {} entries, expected {r}x{c}",
                    g.len()
                )));
            }
        }
        Ok(())
    }
}

/// Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) weights, zero biases except the
/// forget gate, which starts at 1.
pub fn init_params(config: &LmConfig) -> LmParameters {
    let mut p = LmParameters::zeros(config.vocab_size, config.embed_dim, config.hidden_dim);
    let bound = 1.0 / (config.hidden_dim as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for g in [
        &mut p.token_embedding,
        &mut p.w_input,
        &mut p.w_hidden,
        &mut p.decoder,
    ] {
        for v in g.iter_mut() {
            *v = rng.gen_range(-bound..=bound);
        }
    }
    let h = config.hidden_dim;
    p.gate_bias[h..2 * h].fill(1.0);
    p
}

/// Mean of a function's hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionEmbedding {
    pub function_id: u64,
    pub vector: Vec<f64>,
}
