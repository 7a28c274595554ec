//! GRU cell and the attentive decoder step.

use crate::attention::{attend_memory, AttentionMemory, AttentionParams};
use crate::encoder::{init_hidden, project};
use crate::error::{Error, Result};
use crate::model::Params;
use crate::tensor::{Ops, Tensor, TensorError};
use crate::text::{END, PAD, START};

type OpResult<T> = std::result::Result<T, TensorError>;

/// Gate weights of a GRU with input size X and hidden size H:
/// `W*: [X, H]`, `U*: [H, H]`, `b*: [H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<V = Tensor> {
    pub w_z: V,
    pub u_z: V,
    pub b_z: V,
    pub w_r: V,
    pub u_r: V,
    pub b_r: V,
    pub w: V,
    pub u: V,
    pub b: V,
}

/// Vocabulary projection `h · W_o + b_o`, `W_o: [H, K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputHead<V = Tensor> {
    pub w: V,
    pub b: V,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Tensor,
    pub prev_token: usize,
}

fn gate<O: Ops>(ops: &mut O, x: &O::V, h: &O::V, w: &O::V, u: &O::V, b: &O::V) -> OpResult<O::V> {
    let xw = ops.matmul(x, w)?;
    let hu = ops.matmul(h, u)?;
    let s = ops.add(&xw, &hu)?;
    let s = ops.add(&s, b)?;
    Ok(ops.sigmoid(&s))
}

/// One GRU update:
///
/// ```text
/// z = σ(x·W_z + h·U_z + b_z)
/// r = σ(x·W_r + h·U_r + b_r)
/// h̃ = tanh(x·W + r ⊙ (h·U) + b)
/// h' = z ⊙ h + (1 − z) ⊙ h̃
/// ```
pub fn gru_step<O: Ops>(ops: &mut O, x: &O::V, h_prev: &O::V, p: &GruParams<O::V>) -> OpResult<O::V> {
    let z = gate(ops, x, h_prev, &p.w_z, &p.u_z, &p.b_z)?;
    let r = gate(ops, x, h_prev, &p.w_r, &p.u_r, &p.b_r)?;

    let xw = ops.matmul(x, &p.w)?;
    let hu = ops.matmul(h_prev, &p.u)?;
    let reset = ops.mul(&r, &hu)?;
    let cand = ops.add(&xw, &reset)?;
    let cand = ops.add(&cand, &p.b)?;
    let cand = ops.tanh(&cand);

    let keep = ops.mul(&z, h_prev)?;
    let neg_z = ops.scale(&z, -1.0);
    let one_minus_z = ops.shift(&neg_z, 1.0);
    let fresh = ops.mul(&one_minus_z, &cand)?;
    ops.add(&keep, &fresh)
}

pub struct StepOutput<V> {
    pub logits: V,
    pub h: V,
    pub alpha: V,
}

/// Attends with the previous state, feeds `[embedding ; context]` through
/// the GRU and projects the new state to vocabulary logits.
pub fn decode_step<O: Ops>(
    ops: &mut O,
    h_prev: &O::V,
    prev_token: usize,
    memory: &AttentionMemory<O::V>,
    embed: &O::V,
    gru: &GruParams<O::V>,
    att: &AttentionParams<O::V>,
    head: &OutputHead<O::V>,
) -> OpResult<StepOutput<O::V>> {
    let attn = attend_memory(ops, h_prev, memory, att)?;
    let emb = ops.embedding_lookup(embed, prev_token)?;
    let x = ops.concat(&emb, &attn.context, 0)?;
    let h = gru_step(ops, &x, h_prev, gru)?;
    let logits = ops.matmul(&h, &head.w)?;
    let logits = ops.add(&logits, &head.b)?;
    Ok(StepOutput {
        logits,
        h,
        alpha: attn.weights,
    })
}

/// Per-image decoder inputs: attention memory and the initial state.
pub struct Prepared<V> {
    pub memory: AttentionMemory<V>,
    pub h0: V,
}

pub fn prepare<O: Ops>(ops: &mut O, grid: &Tensor, p: &Params<O::V>) -> OpResult<Prepared<O::V>> {
    let g = ops.input(grid.clone());
    let projected = project(ops, &g, &p.proj_w, &p.proj_b)?;
    let memory = AttentionMemory::new(ops, &projected, &p.att)?;
    let h0 = init_hidden(ops, &g, &p.init_w, &p.init_b)?;
    Ok(Prepared { memory, h0 })
}

/// Pads id sequences with PAD to the longest one.
pub fn pad_batch(seqs: &[&[usize]]) -> Vec<Vec<usize>> {
    let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    seqs.iter()
        .map(|s| {
            let mut v = s.to_vec();
            v.resize(longest, PAD);
            v
        })
        .collect()
}

/// Teacher-forced negative log-likelihood, averaged over real target tokens.
///
/// Each entry is a feature grid and a (possibly PAD-extended) id sequence
/// `START w1 .. wn END`. Targets after END are ignored. Returns the loss
/// (shape `[]`) and the number of target tokens it averages over.
pub fn sequence_nll<O: Ops>(
    ops: &mut O,
    params: &Params<O::V>,
    batch: &[(&Tensor, &[usize])],
) -> Result<(O::V, usize)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let vocab = ops.value(&params.embed).shape()[0];
    let mut total: Option<O::V> = None;
    let mut count = 0usize;
    for (grid, ids) in batch {
        if ids.len() < 2 || ids[0] != START {
            return Err(Error::InvalidArgument("caption must start with START and hold at least START, END".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::InvalidArgument(format!("token id {bad} outside vocabulary of size {vocab}")));
        }
        let prep = prepare(ops, grid, params)?;
        let mut h = prep.h0;
        for t in 1..ids.len() {
            let (prev, gold) = (ids[t - 1], ids[t]);
            if prev == END || gold == PAD {
                break;
            }
            let step = decode_step(ops, &h, prev, &prep.memory, &params.embed, &params.gru, &params.att, &params.head)?;
            let logp = ops.log_softmax_axis(&step.logits, 0)?;
            let picked = ops.select(&logp, &[gold])?;
            total = Some(match total {
                None => picked,
                Some(acc) => ops.add(&acc, &picked)?,
            });
            count += 1;
            h = step.h;
        }
    }
    let total = total.ok_or_else(|| Error::InvalidArgument("batch has no target tokens".into()))?;
    let mean = ops.scale(&total, -1.0 / count as f64);
    Ok((ops.reshape(&mean, &[])?, count))
}
