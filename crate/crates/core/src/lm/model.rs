use super::{FunctionEmbedding, LmParameters};
use crate::bpe::PAD;
use crate::error::{Error, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Hidden states and decoder logits for one sequence, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub seq_len: usize,
    /// seq_len x hidden_dim
    pub hidden: Vec<f64>,
    /// seq_len x vocab_size
    pub logits: Vec<f64>,
}

impl Forward {
    pub fn hidden_row(&self, t: usize, hidden_dim: usize) -> &[f64] {
        &self.hidden[t * hidden_dim..(t + 1) * hidden_dim]
    }

    pub fn logits_row(&self, t: usize, vocab_size: usize) -> &[f64] {
        &self.logits[t * vocab_size..(t + 1) * vocab_size]
    }
}

/// Per-step activations kept for backpropagation.
pub(crate) struct Trace {
    pub steps: usize,
    /// activated gates i, f, g, o per step: steps x 4h
    gates: Vec<f64>,
    /// cell state per step: steps x h
    cell: Vec<f64>,
    /// tanh(cell) per step
    cell_tanh: Vec<f64>,
    /// hidden state per step
    pub hidden: Vec<f64>,
}

pub(crate) fn check_ids(params: &LmParameters, ids: &[u32]) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::Contract("token sequence is empty".into()));
    }
    if let Some(&bad) = ids.iter().find(|&&id| id as usize >= params.vocab_size) {
        return Err(Error::Contract(format!(
            "token id {bad} out of range for vocabulary of {}",
            params.vocab_size
        )));
    }
    Ok(())
}

/// Runs the LSTM recurrence from zero hidden and cell states.
pub(crate) fn run(p: &LmParameters, ids: &[u32]) -> Trace {
    let (d, h) = (p.embed_dim, p.hidden_dim);
    let g4 = 4 * h;
    let steps = ids.len();
    let mut trace = Trace {
        steps,
        gates: vec![0.0; steps * g4],
        cell: vec![0.0; steps * h],
        cell_tanh: vec![0.0; steps * h],
        hidden: vec![0.0; steps * h],
    };
    let zeros = vec![0.0; h];
    let mut z = vec![0.0; g4];
    for (t, &id) in ids.iter().enumerate() {
        let x = &p.token_embedding[id as usize * d..(id as usize + 1) * d];
        let (h_prev, c_prev) = if t == 0 {
            (&zeros[..], &zeros[..])
        } else {
            (
                &trace.hidden[(t - 1) * h..t * h],
                &trace.cell[(t - 1) * h..t * h],
            )
        };
        for r in 0..g4 {
            let wx = &p.w_input[r * d..(r + 1) * d];
            let wh = &p.w_hidden[r * h..(r + 1) * h];
            let mut acc = p.gate_bias[r];
            for k in 0..d {
                acc += wx[k] * x[k];
            }
            for k in 0..h {
                acc += wh[k] * h_prev[k];
            }
            z[r] = acc;
        }
        let gates = &mut trace.gates[t * g4..(t + 1) * g4];
        for k in 0..h {
            gates[k] = sigmoid(z[k]);
            gates[h + k] = sigmoid(z[h + k]);
            gates[2 * h + k] = z[2 * h + k].tanh();
            gates[3 * h + k] = sigmoid(z[3 * h + k]);
        }
        let mut c_new = vec![0.0; h];
        for k in 0..h {
            c_new[k] = gates[h + k] * c_prev[k] + gates[k] * gates[2 * h + k];
        }
        for k in 0..h {
            let tc = c_new[k].tanh();
            trace.cell_tanh[t * h + k] = tc;
            trace.hidden[t * h + k] = gates[3 * h + k] * tc;
        }
        trace.cell[t * h..(t + 1) * h].copy_from_slice(&c_new);
    }
    trace
}

pub(crate) fn decode(p: &LmParameters, hidden: &[f64], out: &mut [f64]) {
    let v = p.vocab_size;
    out.copy_from_slice(&p.decoder_bias);
    for (k, &hk) in hidden.iter().enumerate() {
        if hk == 0.0 {
            continue;
        }
        let row = &p.decoder[k * v..(k + 1) * v];
        for (o, w) in out.iter_mut().zip(row) {
            *o += hk * w;
        }
    }
}

/// In-place softmax.
pub(crate) fn softmax(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    for l in logits.iter_mut() {
        *l /= sum;
    }
}

/// Hidden states and logits for every position of `ids`.
pub fn forward(params: &LmParameters, ids: &[u32]) -> Result<Forward> {
    check_ids(params, ids)?;
    let trace = run(params, ids);
    let v = params.vocab_size;
    let h = params.hidden_dim;
    let mut logits = vec![0.0; ids.len() * v];
    for t in 0..ids.len() {
        decode(params, &trace.hidden[t * h..(t + 1) * h], &mut logits[t * v..(t + 1) * v]);
    }
    Ok(Forward {
        seq_len: ids.len(),
        hidden: trace.hidden,
        logits,
    })
}

/// Number of positions with a non-PAD next-token target.
pub(crate) fn predicted_positions(ids: &[u32]) -> usize {
    ids.iter().skip(1).filter(|&&id| id != PAD).count()
}

/// Backpropagates the cross-entropy of one sequence into `grad`, with every
/// position's loss weighted by `weight`. Returns the unweighted summed loss.
pub(crate) fn accumulate(p: &LmParameters, ids: &[u32], weight: f64, grad: &mut LmParameters) -> f64 {
    if ids.len() < 2 {
        return 0.0;
    }
    let (d, h, v) = (p.embed_dim, p.hidden_dim, p.vocab_size);
    let g4 = 4 * h;
    // the last position has no target
    let inputs = &ids[..ids.len() - 1];
    let trace = run(p, inputs);
    let steps = trace.steps;

    let mut loss = 0.0;
    let mut dh_out = vec![0.0; steps * h];
    let mut probs = vec![0.0; v];
    for t in 0..steps {
        let target = ids[t + 1];
        if target == PAD {
            continue;
        }
        let ht = &trace.hidden[t * h..(t + 1) * h];
        decode(p, ht, &mut probs);
        softmax(&mut probs);
        loss -= probs[target as usize].ln();
        probs[target as usize] -= 1.0;
        for pr in probs.iter_mut() {
            *pr *= weight;
        }
        for (gb, pr) in grad.decoder_bias.iter_mut().zip(&probs) {
            *gb += pr;
        }
        let dh = &mut dh_out[t * h..(t + 1) * h];
        for k in 0..h {
            let row = &p.decoder[k * v..(k + 1) * v];
            let grow = &mut grad.decoder[k * v..(k + 1) * v];
            let hk = ht[k];
            let mut acc = 0.0;
            for j in 0..v {
                grow[j] += hk * probs[j];
                acc += row[j] * probs[j];
            }
            dh[k] = acc;
        }
    }

    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; g4];
    let zeros = vec![0.0; h];
    for t in (0..steps).rev() {
        let gates = &trace.gates[t * g4..(t + 1) * g4];
        let c_prev = if t == 0 { &zeros[..] } else { &trace.cell[(t - 1) * h..t * h] };
        let h_prev = if t == 0 { &zeros[..] } else { &trace.hidden[(t - 1) * h..t * h] };
        for k in 0..h {
            let dh = dh_out[t * h + k] + dh_next[k];
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let tc = trace.cell_tanh[t * h + k];
            let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
            dz[k] = dc * g * i * (1.0 - i);
            dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * h + k] = dc * i * (1.0 - g * g);
            dz[3 * h + k] = dh * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let id = inputs[t] as usize;
        let x = &p.token_embedding[id * d..(id + 1) * d];
        dh_next.fill(0.0);
        let mut dx = vec![0.0; d];
        for r in 0..g4 {
            let dzr = dz[r];
            if dzr == 0.0 {
                continue;
            }
            grad.gate_bias[r] += dzr;
            let wx = &p.w_input[r * d..(r + 1) * d];
            let gwx = &mut grad.w_input[r * d..(r + 1) * d];
            for k in 0..d {
                gwx[k] += dzr * x[k];
                dx[k] += dzr * wx[k];
            }
            let wh = &p.w_hidden[r * h..(r + 1) * h];
            let gwh = &mut grad.w_hidden[r * h..(r + 1) * h];
            for k in 0..h {
                gwh[k] += dzr * h_prev[k];
                dh_next[k] += dzr * wh[k];
            }
        }
        let gemb = &mut grad.token_embedding[id * d..(id + 1) * d];
        for k in 0..d {
            gemb[k] += dx[k];
        }
    }
    loss
}

/// Mean next-token cross-entropy over `sequences` and its gradient.
///
/// Returns `(loss, gradient, predicted_positions)`. PAD targets are skipped.
pub fn loss_and_grad<S: AsRef<[u32]>>(
    params: &LmParameters,
    sequences: &[S],
) -> Result<(f64, LmParameters, usize)> {
    for s in sequences {
        check_ids(params, s.as_ref())?;
    }
    let positions: usize = sequences.iter().map(|s| predicted_positions(s.as_ref())).sum();
    let mut grad = params.zeros_like();
    if positions == 0 {
        return Ok((0.0, grad, 0));
    }
    let weight = 1.0 / positions as f64;
    let mut total = 0.0;
    for s in sequences {
        total += accumulate(params, s.as_ref(), weight, &mut grad);
    }
    Ok((total / positions as f64, grad, positions))
}

/// Averages the hidden states of all non-PAD positions (BOS and EOS included).
pub fn embed_function(params: &LmParameters, function_id: u64, ids: &[u32]) -> Result<FunctionEmbedding> {
    check_ids(params, ids)?;
    let h = params.hidden_dim;
    let trace = run(params, ids);
    let mut vector = vec![0.0; h];
    let mut n = 0usize;
    for (t, &id) in ids.iter().enumerate() {
        if id == PAD {
            continue;
        }
        n += 1;
        for (acc, x) in vector.iter_mut().zip(&trace.hidden[t * h..(t + 1) * h]) {
            *acc += x;
        }
    }
    if n > 0 {
        for x in vector.iter_mut() {
            *x /= n as f64;
        }
    }
    Ok(FunctionEmbedding { function_id, vector })
}
