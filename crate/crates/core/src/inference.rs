//! Greedy and beam-search caption generation.

use std::cmp::Ordering;

use crate::decoder::{decode_step, prepare, Prepared};
use crate::encoder::FeatureGrid;
use crate::error::{Error, Result};
use crate::model::CaptionModel;
use crate::tensor::{Eager, Tensor};
use crate::text::{END, PAD, START, UNK};

/// Anything that can produce next-token logits one step at a time.
pub trait StepModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;
    fn initial(&self) -> Result<Self::State>;
    /// Logits over the vocabulary, the next state, and the attention
    /// weights used for this step (empty if the model has none).
    fn step(&self, state: &Self::State, prev: usize) -> Result<(Vec<f64>, Self::State, Vec<f64>)>;
}

/// Tokens that are never generated.
pub fn is_masked(id: usize) -> bool {
    matches!(id, PAD | START | UNK)
}

/// Log-softmax over the unmasked ids; masked ids get `-inf`.
pub fn masked_log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_masked(*i))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| !is_masked(*i))
        .map(|(_, &v)| (v - max).exp())
        .sum();
    let log_z = max + sum.ln();
    logits
        .iter()
        .enumerate()
        .map(|(i, &v)| if is_masked(i) { f64::NEG_INFINITY } else { v - log_z })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// 1 decodes greedily.
    pub beam_width: usize,
    /// Upper bound on decoding steps; END uses a step.
    pub max_len: usize,
    /// Length-normalization exponent: `score = log_prob / len^alpha`.
    pub alpha: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            beam_width: 1,
            max_len: 20,
            alpha: 0.0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::InvalidArgument("beam width must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument("alpha must be a non-negative number".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedCaption {
    pub tokens: Vec<String>,
    /// Word ids, END excluded.
    pub ids: Vec<usize>,
    /// Sum of per-step log-probabilities, END included when emitted.
    pub log_prob: f64,
    /// One attention vector per entry of `tokens`.
    pub attention_trace: Vec<Vec<f64>>,
    /// Whether decoding stopped on END rather than on `max_len`.
    pub ended: bool,
}

impl DecodedCaption {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Number of scored steps.
    pub fn scored_len(&self) -> usize {
        self.ids.len() + usize::from(self.ended)
    }
}

/// Raw result of a search, before ids are turned into words.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub ids: Vec<usize>,
    pub log_prob: f64,
    pub alphas: Vec<Vec<f64>>,
    pub ended: bool,
}

impl Hypothesis {
    fn len(&self) -> usize {
        self.ids.len() + usize::from(self.ended)
    }

    pub fn score(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            self.log_prob
        } else {
            self.log_prob / (self.len().max(1) as f64).powf(alpha)
        }
    }
}

/// Best first: higher score, then the lexicographically smaller id sequence
/// (END counted as the last id of an ended hypothesis).
fn rank(a: &Hypothesis, b: &Hypothesis, alpha: f64) -> Ordering {
    b.score(alpha).total_cmp(&a.score(alpha)).then_with(|| {
        let ka = a.ids.iter().copied().chain(a.ended.then_some(END));
        let kb = b.ids.iter().copied().chain(b.ended.then_some(END));
        ka.cmp(kb)
    })
}

/// Picks the highest-logit unmasked token each step, lowest id on ties.
pub fn greedy_search<M: StepModel>(model: &M, max_len: usize) -> Result<Hypothesis> {
    let mut state = model.initial()?;
    let mut prev = START;
    let mut hyp = Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        alphas: Vec::new(),
        ended: false,
    };
    for _ in 0..max_len {
        let (logits, next, alpha) = model.step(&state, prev)?;
        let logp = masked_log_softmax(&logits);
        let mut best = None;
        for (i, &v) in logp.iter().enumerate() {
            if is_masked(i) {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        let (tok, lp) = best.ok_or_else(|| Error::InvalidArgument("vocabulary has no emittable token".into()))?;
        hyp.log_prob += lp;
        if tok == END {
            hyp.ended = true;
            break;
        }
        hyp.ids.push(tok);
        hyp.alphas.push(alpha);
        state = next;
        prev = tok;
    }
    Ok(hyp)
}

/// Beam search. Each step expands every live hypothesis by every emittable
/// token and keeps the best `width` candidates overall; candidates ending in
/// END, or reaching `max_len`, are retired. The best retired hypothesis wins.
pub fn beam_search<M: StepModel>(model: &M, width: usize, max_len: usize, alpha: f64) -> Result<Hypothesis> {
    if width == 0 {
        return Err(Error::InvalidArgument("beam width must be at least 1".into()));
    }
    let start = Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        alphas: Vec::new(),
        ended: false,
    };
    let mut live = vec![(start, model.initial()?)];
    let mut done: Vec<Hypothesis> = Vec::new();

    for step in 0..max_len {
        let mut candidates: Vec<(Hypothesis, usize)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (b, (hyp, state)) in live.iter().enumerate() {
            let prev = hyp.ids.last().copied().unwrap_or(START);
            let (logits, next, att) = model.step(state, prev)?;
            let logp = masked_log_softmax(&logits);
            states.push(next);
            for (tok, &lp) in logp.iter().enumerate() {
                if is_masked(tok) {
                    continue;
                }
                let mut cand = Hypothesis {
                    ids: hyp.ids.clone(),
                    log_prob: hyp.log_prob + lp,
                    alphas: hyp.alphas.clone(),
                    ended: tok == END,
                };
                if tok != END {
                    cand.ids.push(tok);
                    cand.alphas.push(att.clone());
                }
                candidates.push((cand, b));
            }
        }
        candidates.sort_by(|a, b| rank(&a.0, &b.0, alpha));
        candidates.truncate(width);

        let last = step + 1 == max_len;
        let mut next_live = Vec::new();
        for (cand, b) in candidates {
            if cand.ended || last {
                done.push(cand);
            } else {
                next_live.push((cand, states[b].clone()));
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }
    done.sort_by(|a, b| rank(a, b, alpha));
    done.into_iter()
        .next()
        .ok_or_else(|| Error::InvalidArgument("beam search produced no hypothesis".into()))
}

/// Runs a search according to `cfg`: greedy for width 1, beam otherwise.
pub fn search<M: StepModel>(model: &M, cfg: &DecodeConfig) -> Result<Hypothesis> {
    cfg.validate()?;
    if cfg.beam_width == 1 {
        greedy_search(model, cfg.max_len)
    } else {
        beam_search(model, cfg.beam_width, cfg.max_len, cfg.alpha)
    }
}

/// A trained caption model bound to one image.
pub struct GridDecoder<'a> {
    model: &'a CaptionModel,
    prepared: Prepared<Tensor>,
}

impl<'a> GridDecoder<'a> {
    pub fn new(model: &'a CaptionModel, grid: &FeatureGrid) -> Result<Self> {
        model.check_grid(grid)?;
        let prepared = prepare(&mut Eager, &grid.values, &model.params)?;
        Ok(Self { model, prepared })
    }
}

impl StepModel for GridDecoder<'_> {
    type State = Tensor;

    fn vocab_size(&self) -> usize {
        self.model.vocab.len()
    }

    fn initial(&self) -> Result<Tensor> {
        Ok(self.prepared.h0.clone())
    }

    fn step(&self, h: &Tensor, prev: usize) -> Result<(Vec<f64>, Tensor, Vec<f64>)> {
        let p = &self.model.params;
        let out = decode_step(&mut Eager, h, prev, &self.prepared.memory, &p.embed, &p.gru, &p.att, &p.head)?;
        Ok((out.logits.into_data(), out.h, out.alpha.into_data()))
    }
}

fn to_caption(model: &CaptionModel, hyp: Hypothesis) -> Result<DecodedCaption> {
    let tokens = hyp
        .ids
        .iter()
        .map(|&id| {
            model
                .vocab
                .token(id)
                .map(str::to_owned)
                .ok_or_else(|| Error::InvalidArgument(format!("token id {id} outside vocabulary")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecodedCaption {
        tokens,
        ids: hyp.ids,
        log_prob: hyp.log_prob,
        attention_trace: hyp.alphas,
        ended: hyp.ended,
    })
}

pub fn greedy_decode(model: &CaptionModel, grid: &FeatureGrid, max_len: usize) -> Result<DecodedCaption> {
    let dec = GridDecoder::new(model, grid)?;
    to_caption(model, greedy_search(&dec, max_len)?)
}

pub fn beam_decode(model: &CaptionModel, grid: &FeatureGrid, cfg: &DecodeConfig) -> Result<DecodedCaption> {
    cfg.validate()?;
    let dec = GridDecoder::new(model, grid)?;
    to_caption(model, beam_search(&dec, cfg.beam_width, cfg.max_len, cfg.alpha)?)
}

pub fn caption(model: &CaptionModel, grid: &FeatureGrid, cfg: &DecodeConfig) -> Result<DecodedCaption> {
    let dec = GridDecoder::new(model, grid)?;
    to_caption(model, search(&dec, cfg)?)
}

/// Captions every grid independently; one failure does not stop the rest.
pub fn caption_batch(model: &CaptionModel, grids: &[FeatureGrid], cfg: &DecodeConfig) -> Vec<Result<DecodedCaption>> {
    grids.iter().map(|g| caption(model, g, cfg)).collect()
}

/// Teacher-forced log-probability of `ids` (words only) under the masked
/// decoding distribution, optionally followed by END.
pub fn rescore<M: StepModel>(model: &M, ids: &[usize], ended: bool) -> Result<f64> {
    let mut state = model.initial()?;
    let mut prev = START;
    let mut total = 0.0;
    let targets = ids.iter().copied().chain(ended.then_some(END));
    for tok in targets {
        let (logits, next, _) = model.step(&state, prev)?;
        total += masked_log_softmax(&logits)[tok];
        state = next;
        prev = tok;
    }
    Ok(total)
}
