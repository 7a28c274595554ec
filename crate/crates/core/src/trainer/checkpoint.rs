//! Versioned binary checkpoints.
//!
//! ```text
//! "CAPTCKPT"          8-byte magic
//! u32                 format version
//! u64                 payload length
//! payload
//! u64                 FNV-1a 64 of the payload
//! ```
//!
//! Payload, integers little-endian, strings as `u32 len + UTF-8`:
//!
//! ```text
//! u8 has_encoder; if 1: str name, u32 L, u32 D
//! u32 n; n × (str key, str value)            effective config echo
//! u32 n; n × str                             vocabulary words from id 4
//! u32 n; n × (str name, u32 rank, rank × u32 dim, f64 × Π dim)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::encoder::{EncoderKind, EncoderSpec};
use crate::error::{Error, Result};
use crate::model::{CaptionModel, ModelParameters};
use crate::tensor::Tensor;
use crate::text::Vocabulary;
use crate::trainer::TrainConfig;

pub const MAGIC: &[u8; 8] = b"CAPTCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Raw checkpoint contents. Caption models and word2vec exports share it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub encoder: Option<EncoderSpec>,
    pub config: Vec<(String, String)>,
    pub vocab: Vocabulary,
    pub tensors: BTreeMap<String, Tensor>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::CorruptCheckpoint("unexpected end of payload".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("string is not UTF-8".into()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        match &self.encoder {
            Some(spec) => {
                w.0.push(1);
                w.str(spec.kind.name());
                w.u32(spec.locations as u32);
                w.u32(spec.channels as u32);
            }
            None => w.0.push(0),
        }
        w.u32(self.config.len() as u32);
        for (k, v) in &self.config {
            w.str(k);
            w.str(v);
        }
        w.u32(self.vocab.words().len() as u32);
        for word in self.vocab.words() {
            w.str(word);
        }
        w.u32(self.tensors.len() as u32);
        for (name, t) in &self.tensors {
            w.str(name);
            w.u32(t.rank() as u32);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            for v in t.data() {
                w.0.extend_from_slice(&v.to_le_bytes());
            }
        }
        let payload = w.0;

        let mut out = Vec::with_capacity(payload.len() + 28);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&fnv1a(&payload).to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, at: 0 };
        if r.take(8).ok() != Some(&MAGIC[..]) {
            return Err(Error::CorruptCheckpoint("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let len = r.u64()? as usize;
        let payload = r.take(len)?;
        let checksum = r.u64()?;
        if r.at != bytes.len() {
            return Err(Error::CorruptCheckpoint("trailing bytes after checksum".into()));
        }
        if checksum != fnv1a(payload) {
            return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
        }

        let mut r = Reader { buf: payload, at: 0 };
        let encoder = match r.u8()? {
            0 => None,
            1 => {
                let kind: EncoderKind = r
                    .str()?
                    .parse()
                    .map_err(|e: Error| Error::CorruptCheckpoint(e.to_string()))?;
                let locations = r.u32()? as usize;
                let channels = r.u32()? as usize;
                Some(EncoderSpec {
                    kind,
                    locations,
                    channels,
                })
            }
            other => return Err(Error::CorruptCheckpoint(format!("bad encoder flag {other}"))),
        };
        let n = r.u32()?;
        let mut config = Vec::new();
        for _ in 0..n {
            config.push((r.str()?, r.str()?));
        }
        let n = r.u32()?;
        let mut words = Vec::new();
        for _ in 0..n {
            words.push(r.str()?);
        }
        let vocab = Vocabulary::from_tokens(words).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let n = r.u32()?;
        let mut tensors = BTreeMap::new();
        for _ in 0..n {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("tensor {name} is too large")))?;
            let raw = r.take(count.checked_mul(8).ok_or_else(|| {
                Error::CorruptCheckpoint(format!("tensor {name} is too large"))
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(format!("{name}: {e}")))?;
            if tensors.insert(name.clone(), t).is_some() {
                return Err(Error::CorruptCheckpoint(format!("duplicate tensor {name}")));
            }
        }
        if r.at != payload.len() {
            return Err(Error::CorruptCheckpoint("unread payload bytes".into()));
        }
        Ok(Self {
            encoder,
            config,
            vocab,
            tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl From<&CaptionModel> for Checkpoint {
    fn from(model: &CaptionModel) -> Self {
        Checkpoint {
            encoder: Some(model.encoder),
            config: model.config.to_pairs(),
            vocab: model.vocab.clone(),
            tensors: model
                .params
                .named()
                .into_iter()
                .map(|(n, t)| (n.to_owned(), t.clone()))
                .collect(),
        }
    }
}

impl TryFrom<Checkpoint> for CaptionModel {
    type Error = Error;

    fn try_from(ckpt: Checkpoint) -> Result<Self> {
        let encoder = ckpt
            .encoder
            .ok_or_else(|| Error::Format("checkpoint holds no caption model (no encoder)".into()))?;
        let config = TrainConfig::from_pairs(ckpt.config.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        let params = ModelParameters::from_named(ckpt.tensors)?;
        let dims = params.dims();
        if dims.vocab != ckpt.vocab.len() {
            return Err(Error::Format(format!(
                "embedding table has {} rows but the vocabulary has {} entries",
                dims.vocab,
                ckpt.vocab.len()
            )));
        }
        if dims.feature != encoder.channels {
            return Err(Error::Format("projection width does not match the encoder channels".into()));
        }
        Ok(CaptionModel {
            vocab: ckpt.vocab,
            encoder,
            params,
            config,
        })
    }
}

pub fn save_checkpoint(model: &CaptionModel, path: impl AsRef<Path>) -> Result<()> {
    Checkpoint::from(model).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<CaptionModel> {
    CaptionModel::try_from(Checkpoint::load(path)?)
}
