use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoder::EncoderKind;
use crate::error::{Error, Result};

/// Training hyper-parameters. Every field has a default; files use one
/// `key = value` per line with `#` comments.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub grad_clip_norm: f64,
    /// Longest id sequence, START and END included.
    pub max_caption_len: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub min_count: usize,
    pub encoder: EncoderKind,
    /// Checkpoint holding a `word2vec.center` table to seed the embeddings.
    pub word2vec_init: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 42,
            grad_clip_norm: 5.0,
            max_caption_len: 22,
            embed_dim: 256,
            hidden_dim: 512,
            attention_dim: 256,
            min_count: 5,
            encoder: EncoderKind::Toy,
            word2vec_init: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Format(format!("config key {key}: cannot parse {value:?}: {e}")))
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "grad_clip_norm" => self.grad_clip_norm = parse(key, value)?,
            "max_caption_len" => self.max_caption_len = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "attention_dim" => self.attention_dim = parse(key, value)?,
            "min_count" => self.min_count = parse(key, value)?,
            "encoder" => self.encoder = value.parse()?,
            "word2vec_init" => {
                self.word2vec_init = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            _ => return Err(Error::Format(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// The effective configuration as ordered key/value pairs.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let w2v = self
            .word2vec_init
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        [
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("seed", self.seed.to_string()),
            ("grad_clip_norm", self.grad_clip_norm.to_string()),
            ("max_caption_len", self.max_caption_len.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("attention_dim", self.attention_dim.to_string()),
            ("min_count", self.min_count.to_string()),
            ("encoder", self.encoder.to_string()),
            ("word2vec_init", w2v),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("config line {}: expected key = value", n + 1)))?;
            pairs.push((k.trim(), v.trim()));
        }
        Self::from_pairs(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_kv(&text)
    }

    pub fn to_kv(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("attention_dim", self.attention_dim),
            ("min_count", self.min_count),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        if self.max_caption_len < 2 {
            return Err(Error::InvalidArgument("max_caption_len must be at least 2".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("lr must be a non-negative number".into()));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::InvalidArgument("grad_clip_norm must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("Adam betas must be in [0, 1) and eps positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file_with_comments() {
        let cfg = TrainConfig::parse_kv("# tiny\nepochs = 3\n\nhidden_dim=8 # small\nencoder = vgg16\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.hidden_dim, 8);
        assert_eq!(cfg.encoder, EncoderKind::Vgg16);
        assert_eq!(cfg.lr, 1e-3);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(TrainConfig::parse_kv("epoch = 3").is_err());
        assert!(TrainConfig::parse_kv("epochs = many").is_err());
        assert!(TrainConfig::parse_kv("max_caption_len = 1").is_err());
        assert!(TrainConfig::parse_kv("batch_size = 0").is_err());
        assert!(TrainConfig::parse_kv("just words").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = TrainConfig::default();
        cfg.lr = 0.0123;
        cfg.word2vec_init = Some("emb.ckpt".into());
        assert_eq!(TrainConfig::parse_kv(&cfg.to_kv()).unwrap(), cfg);
    }
}
