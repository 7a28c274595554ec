//! Caption normalization, vocabulary and id sequences.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<start>", "<end>", "<unk>"];

/// Lowercases, drops every character outside `a-z` and whitespace, then
/// splits on whitespace.
pub fn normalize(raw: &str) -> Vec<String> {
    let cleaned: String = raw
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_ascii_lowercase() || c.is_whitespace())
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// Bidirectional token/id map. Ids 0..4 are the reserved control tokens,
/// corpus tokens follow densely from 4.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary directly from an ordered token list (ids from 4).
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut token_to_id = HashMap::new();
        for tok in tokens {
            let tok = tok.into();
            if tok.is_empty() || RESERVED.contains(&tok.as_str()) {
                return Err(Error::Format(format!("invalid vocabulary token {tok:?}")));
            }
            if token_to_id.insert(tok.clone(), id_to_token.len()).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary token {tok:?}")));
            }
            id_to_token.push(tok);
        }
        Ok(Self {
            token_to_id,
            id_to_token,
        })
    }

    /// Vocabulary size K, control tokens included.
    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    /// Corpus tokens in id order (control tokens excluded).
    pub fn words(&self) -> &[String] {
        &self.id_to_token[RESERVED.len()..]
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> CaptionSequence {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(START);
        ids.extend(tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)));
        ids.push(END);
        CaptionSequence { ids }
    }

    /// Joins the non-reserved tokens of `ids` with single spaces.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or_else(|| {
                Error::InvalidArgument(format!("token id {id} outside vocabulary of size {}", self.len()))
            })?;
            if id >= RESERVED.len() {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }

    /// Checks the bijection and density invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, r) in RESERVED.iter().enumerate() {
            if self.id_to_token.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Format("reserved tokens missing".into()));
            }
        }
        if self.token_to_id.len() != self.len() - RESERVED.len() {
            return Err(Error::Format("vocabulary map is not a bijection".into()));
        }
        for (tok, &id) in &self.token_to_id {
            if id < RESERVED.len() || self.id_to_token.get(id) != Some(tok) {
                return Err(Error::Format(format!("vocabulary entry {tok:?} -> {id} is inconsistent")));
            }
        }
        Ok(())
    }
}

/// Counts tokens and keeps those seen at least `min_count` times, ordered by
/// descending frequency with ties broken lexicographically.
pub fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for sentence in corpus {
        for tok in sentence {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !RESERVED.contains(t) && !t.is_empty())
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let vocab = Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t))?;
    vocab.validate()?;
    Ok(vocab)
}

/// Token ids of one caption, wrapped in START ... END.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionSequence {
    pub ids: Vec<usize>,
}

impl CaptionSequence {
    /// Length including START and END.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// One line of a captions file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaptionRecord {
    pub image_id: String,
    /// Caption text as it appeared in the file.
    pub raw: String,
    pub tokens: Vec<String>,
}

impl CaptionRecord {
    pub fn encode(&self, vocab: &Vocabulary) -> CaptionSequence {
        vocab.encode(&self.tokens)
    }
}

/// Parses `image_id<TAB>caption` lines. Blank lines are skipped; CRLF and LF
/// are equivalent.
pub fn parse_captions(text: &str) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            continue;
        }
        let Some((id, raw)) = line.split_once('\t') else {
            return Err(Error::Format(format!("line {}: expected image_id<TAB>caption", n + 1)));
        };
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::Format(format!("line {}: empty image id", n + 1)));
        }
        out.push(CaptionRecord {
            image_id: id.to_owned(),
            raw: raw.to_owned(),
            tokens: normalize(raw),
        });
    }
    Ok(out)
}

pub fn load_captions(path: impl AsRef<Path>) -> Result<Vec<CaptionRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_captions(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
