//! Skip-gram word vectors with a full softmax.
//!
//! Every word owns a center vector and a context vector. The probability of
//! seeing `o` near `c` is `softmax_o(context · center_c)` over the whole
//! vocabulary. Training is plain full-batch gradient descent, so on a fixed
//! corpus the loss never goes up for a small enough step.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, TensorError, Var};
use crate::text::{build_vocab, normalize, Vocabulary};
use crate::trainer::Checkpoint;

/// Checkpoint tensor holding the exported center table.
pub const CENTER_TABLE: &str = "word2vec.center";
pub const CONTEXT_TABLE: &str = "word2vec.context";

/// Center and context tables, both `[V, E]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub center: Tensor,
    pub context: Tensor,
}

impl EmbeddingPair {
    /// Uniform in `[-0.5/E, 0.5/E]`.
    pub fn init(vocab: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let r = 0.5 / dim as f64;
        let center = Tensor::uniform(&[vocab, dim], -r, r, rng);
        let context = Tensor::uniform(&[vocab, dim], -r, r, rng);
        Self { center, context }
    }

    pub fn vocab(&self) -> usize {
        self.center.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.center.shape()[1]
    }
}

/// All `(center, context)` pairs with `0 < |offset| ≤ window`, never across
/// sentence boundaries. Ordered by sentence, then position, then offset.
pub fn skipgram_pairs(corpus: &[Vec<usize>], window: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for sentence in corpus {
        for (t, &center) in sentence.iter().enumerate() {
            let lo = t.saturating_sub(window);
            let hi = (t + window).min(sentence.len().saturating_sub(1));
            for (j, &ctx) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                if j != t {
                    pairs.push((center, ctx));
                }
            }
        }
    }
    pairs
}

/// Records the mean negative log-likelihood of `pairs` on `tape`.
pub fn skipgram_loss_on(tape: &mut Tape, center: Var, context: Var, pairs: &[(usize, usize)]) -> Result<Var, TensorError> {
    if pairs.is_empty() {
        return Err(TensorError::Invalid("no skip-gram pairs".into()));
    }
    let vocab = tape.value(context).shape()[0];
    let centers: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let picks: Vec<usize> = pairs.iter().enumerate().map(|(i, p)| i * vocab + p.1).collect();
    let rows = tape.gather_rows(center, &centers)?;
    let ctx_t = tape.transpose(context)?;
    let logits = tape.matmul(rows, ctx_t)?;
    let logp = tape.log_softmax_axis(logits, 1)?;
    let flat = tape.reshape(logp, &[pairs.len() * vocab])?;
    let picked = tape.select(flat, &picks)?;
    let total = tape.sum_all(picked);
    Ok(tape.scale(total, -1.0 / pairs.len() as f64))
}

pub fn skipgram_loss(pairs: &[(usize, usize)], emb: &EmbeddingPair) -> Result<f64> {
    let mut tape = Tape::new();
    let c = tape.leaf(emb.center.clone());
    let o = tape.leaf(emb.context.clone());
    let loss = skipgram_loss_on(&mut tape, c, o, pairs)?;
    Ok(tape.value(loss).item())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Word2VecConfig {
    pub dim: usize,
    pub window: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for Word2VecConfig {
    fn default() -> Self {
        Self {
            dim: 8,
            window: 3,
            epochs: 500,
            lr: 0.5,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Word2VecOutcome {
    pub vocab: Vocabulary,
    pub tables: EmbeddingPair,
    /// Full-batch loss before each epoch's update, then the final loss.
    pub history: Vec<f64>,
}

impl Word2VecOutcome {
    pub fn center(&self) -> &Tensor {
        &self.tables.center
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.vocab.id(word).map(|i| self.tables.center.row(i))
    }

    pub fn to_checkpoint(&self, cfg: &Word2VecConfig) -> Checkpoint {
        Checkpoint {
            encoder: None,
            config: vec![
                ("dim".into(), cfg.dim.to_string()),
                ("window".into(), cfg.window.to_string()),
                ("epochs".into(), cfg.epochs.to_string()),
                ("lr".into(), cfg.lr.to_string()),
                ("seed".into(), cfg.seed.to_string()),
            ],
            vocab: self.vocab.clone(),
            tensors: [
                (CENTER_TABLE.to_owned(), self.tables.center.clone()),
                (CONTEXT_TABLE.to_owned(), self.tables.context.clone()),
            ]
            .into_iter()
            .collect(),
        }
    }
}

/// Sentences as normalized token lists. Lines holding a TAB are read as
/// caption records and only the text after the first TAB is used.
pub fn parse_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|line| line.split_once('\t').map_or(line, |(_, cap)| cap))
        .map(normalize)
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_corpus(&text))
}

/// Trains center/context tables on tokenized sentences. The vocabulary
/// keeps every word (minimum count 1) and the reserved ids.
pub fn train_word2vec(sentences: &[Vec<String>], cfg: &Word2VecConfig) -> Result<Word2VecOutcome> {
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(Error::InvalidArgument("dim and window must be positive".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::InvalidArgument("lr must be a non-negative number".into()));
    }
    let vocab = build_vocab(sentences, 1)?;
    let corpus: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().map(|w| vocab.id(w).expect("word is in vocabulary")).collect())
        .collect();
    let pairs = skipgram_pairs(&corpus, cfg.window);
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("corpus has no sentence with two or more words".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tables = EmbeddingPair::init(vocab.len(), cfg.dim, &mut rng);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let mut tape = Tape::new();
        let c = tape.leaf(tables.center.clone());
        let o = tape.leaf(tables.context.clone());
        let loss = skipgram_loss_on(&mut tape, c, o, &pairs)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("word2vec loss is {value} at epoch {epoch}")));
        }
        history.push(value);
        let mut grads = tape.backward(loss)?;
        let gc = grads.take(c).expect("center is a leaf");
        let go = grads.take(o).expect("context is a leaf");
        tables.center = tables.center.sub(&gc.scale(cfg.lr))?;
        tables.context = tables.context.sub(&go.scale(cfg.lr))?;
    }
    history.push(skipgram_loss(&pairs, &tables)?);
    Ok(Word2VecOutcome { vocab, tables, history })
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
