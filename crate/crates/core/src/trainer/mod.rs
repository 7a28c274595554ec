//! Maximum-likelihood training of the caption model with Adam.

mod adam;
mod checkpoint;
mod config;

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use config::TrainConfig;

use crate::decoder::{pad_batch, sequence_nll};
use crate::encoder::{EncoderSpec, FeatureGrid};
use crate::error::{Error, Result};
use crate::model::{CaptionModel, ModelDims, ModelParameters};
use crate::tensor::{Tape, Tensor};
use crate::text::{build_vocab, CaptionRecord, CaptionSequence, Vocabulary};
use crate::word2vec::CENTER_TABLE;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: CaptionModel,
    /// Token-weighted mean NLL of every epoch.
    pub history: Vec<f64>,
}

/// Pairs every caption with the grid of the same image id.
pub fn join_captions<'a>(
    grids: &'a [FeatureGrid],
    captions: &'a [CaptionRecord],
) -> Result<Vec<(&'a FeatureGrid, &'a CaptionRecord)>> {
    let by_id: HashMap<&str, &FeatureGrid> = grids.iter().map(|g| (g.image_id.as_str(), g)).collect();
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(captions.len());
    for rec in captions {
        match by_id.get(rec.image_id.as_str()) {
            Some(g) => pairs.push((*g, rec)),
            None => missing.push(rec.image_id.as_str()),
        }
    }
    if !missing.is_empty() {
        missing.dedup();
        return Err(Error::Format(format!("no features for image ids: {}", missing.join(", "))));
    }
    Ok(pairs)
}

/// Encodes a caption, keeping at most `max_len - 2` words.
pub fn encode_truncated(vocab: &Vocabulary, rec: &CaptionRecord, max_len: usize) -> CaptionSequence {
    let keep = rec.tokens.len().min(max_len.saturating_sub(2));
    vocab.encode(&rec.tokens[..keep])
}

fn seed_embeddings(params: &mut ModelParameters, vocab: &Vocabulary, cfg: &TrainConfig) -> Result<()> {
    let Some(path) = &cfg.word2vec_init else {
        return Ok(());
    };
    let ckpt = Checkpoint::load(path)?;
    let table = ckpt
        .tensors
        .get(CENTER_TABLE)
        .ok_or_else(|| Error::Format(format!("{} has no {CENTER_TABLE} table", path.display())))?;
    if table.rank() != 2 || table.shape()[1] != cfg.embed_dim {
        return Err(Error::Format(format!(
            "word2vec table {:?} does not match embed_dim {}",
            table.shape(),
            cfg.embed_dim
        )));
    }
    let dim = cfg.embed_dim;
    for (i, word) in vocab.words().iter().enumerate() {
        if let Some(src) = ckpt.vocab.id(word) {
            let row = table.row(src).to_vec();
            let dst = i + crate::text::RESERVED.len();
            params.embed.data_mut()[dst * dim..(dst + 1) * dim].copy_from_slice(&row);
        }
    }
    Ok(())
}

pub fn train(grids: &[FeatureGrid], captions: &[CaptionRecord], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with_progress(grids, captions, cfg, |_, _| {})
}

/// Trains from scratch; `on_epoch(epoch, mean_nll)` runs after each epoch.
pub fn train_with_progress(
    grids: &[FeatureGrid],
    captions: &[CaptionRecord],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if captions.is_empty() {
        return Err(Error::InvalidArgument("no training captions".into()));
    }
    let pairs = join_captions(grids, captions)?;
    let encoder = EncoderSpec::for_grid(cfg.encoder, pairs[0].0)?;
    for (g, _) in &pairs {
        encoder.validate(g)?;
    }

    let corpus: Vec<Vec<&str>> = captions
        .iter()
        .map(|r| r.tokens.iter().map(String::as_str).collect())
        .collect();
    let vocab = build_vocab(&corpus, cfg.min_count)?;
    let sequences: Vec<CaptionSequence> = pairs
        .iter()
        .map(|(_, rec)| encode_truncated(&vocab, rec, cfg.max_caption_len))
        .collect();

    let dims = ModelDims {
        vocab: vocab.len(),
        feature: encoder.channels,
        embed: cfg.embed_dim,
        hidden: cfg.hidden_dim,
        attention: cfg.attention_dim,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParameters::init(&dims, &mut rng);
    seed_embeddings(&mut params, &vocab, cfg)?;

    let mut adam = AdamState::new(AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    });
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_tokens = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let ids: Vec<&[usize]> = chunk.iter().map(|&i| sequences[i].ids.as_slice()).collect();
            let padded = pad_batch(&ids);
            let batch: Vec<(&Tensor, &[usize])> = chunk
                .iter()
                .zip(&padded)
                .map(|(&i, seq)| (&pairs[i].0.values, seq.as_slice()))
                .collect();
            let (loss, tokens) = train_step(&mut params, &mut adam, &batch, cfg.grad_clip_norm).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {b}: {msg}")),
                other => other,
            })?;
            epoch_sum += loss * tokens as f64;
            epoch_tokens += tokens;
        }
        if !params.is_finite() {
            return Err(Error::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        let mean = epoch_sum / epoch_tokens as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }

    Ok(TrainOutcome {
        model: CaptionModel {
            vocab,
            encoder,
            params,
            config: cfg.clone(),
        },
        history,
    })
}

/// Forward, backward, clip and one Adam update on a single batch.
/// Returns the batch's mean NLL (before the update) and its token count.
pub fn train_step(
    params: &mut ModelParameters,
    adam: &mut AdamState,
    batch: &[(&Tensor, &[usize])],
    clip: f64,
) -> Result<(f64, usize)> {
    let mut tape = Tape::new();
    let vars = params.map(|_, t| tape.leaf(t.clone()));
    let (loss, tokens) = sequence_nll(&mut tape, &vars, batch)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Numeric(format!("loss is {value}")));
    }
    let mut grads = tape.backward(loss)?;
    let mut grads = vars.map(|_, v| grads.take(*v).expect("every parameter is a leaf"));
    {
        let mut refs: Vec<&mut Tensor> = grads.named_mut().into_iter().map(|(_, g)| g).collect();
        clip_global_norm(&mut refs, clip);
    }
    adam.update(params.named_mut(), &grads.named())?;
    Ok((value, tokens))
}
