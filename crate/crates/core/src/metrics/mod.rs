//! Corpus caption metrics against multiple references: BLEU-1..4, ROUGE-L,
//! CIDEr and an exact-match METEOR.

mod bleu;
mod cider;
mod meteor;
mod ngram;
mod rouge;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu, clipped_counts, closest_ref_len};
pub use cider::cider;
pub use meteor::{align, chunks, meteor_lite, meteor_single};
pub use ngram::{lcs_len, ngrams};
pub use rouge::{rouge_l, rouge_l_single};

use crate::error::{Error, Result};
use crate::text::{load_captions, normalize, CaptionRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pub image_id: String,
    pub hypothesis: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalPair {
    /// Tokenizes both sides with [`normalize`].
    pub fn from_text(image_id: &str, hypothesis: &str, references: &[&str]) -> Result<Self> {
        let pair = Self {
            image_id: image_id.to_owned(),
            hypothesis: normalize(hypothesis),
            references: references.iter().map(|r| normalize(r)).collect(),
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.references.iter().all(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("{}: no non-empty reference", self.image_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub meteor: f64,
}

impl ScoreReport {
    pub fn rows(&self) -> [(&'static str, f64); 7] {
        [
            ("BLEU-1", self.bleu1),
            ("BLEU-2", self.bleu2),
            ("BLEU-3", self.bleu3),
            ("BLEU-4", self.bleu4),
            ("ROUGE-L", self.rouge_l),
            ("CIDEr", self.cider),
            ("METEOR", self.meteor),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("score report serializes")
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, v) in self.rows() {
            writeln!(f, "{name:<8} {v:.6}")?;
        }
        Ok(())
    }
}

pub fn score_pairs(pairs: &[EvalPair]) -> ScoreReport {
    ScoreReport {
        bleu1: bleu(pairs, 1),
        bleu2: bleu(pairs, 2),
        bleu3: bleu(pairs, 3),
        bleu4: bleu(pairs, 4),
        rouge_l: rouge_l(pairs),
        cider: cider(pairs),
        meteor: meteor_lite(pairs),
    }
}

/// Joins hypotheses (one per image) with every reference of the same image.
pub fn pairs_from_records(hyps: &[CaptionRecord], refs: &[CaptionRecord]) -> Result<Vec<EvalPair>> {
    if hyps.is_empty() {
        return Err(Error::InvalidArgument("no hypotheses to score".into()));
    }
    let mut by_id: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
    for r in refs {
        by_id.entry(&r.image_id).or_default().push(r.tokens.clone());
    }
    let mut seen = std::collections::HashSet::new();
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(hyps.len());
    for h in hyps {
        if !seen.insert(h.image_id.as_str()) {
            return Err(Error::Format(format!("more than one hypothesis for image {}", h.image_id)));
        }
        match by_id.get(h.image_id.as_str()) {
            Some(r) => {
                let pair = EvalPair {
                    image_id: h.image_id.clone(),
                    hypothesis: h.tokens.clone(),
                    references: r.clone(),
                };
                pair.validate()?;
                pairs.push(pair);
            }
            None => missing.push(h.image_id.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Format(format!("no references for image ids: {}", missing.join(", "))));
    }
    Ok(pairs)
}

pub fn score_files(hyp_path: impl AsRef<Path>, ref_path: impl AsRef<Path>) -> Result<ScoreReport> {
    let hyps = load_captions(hyp_path.as_ref())?;
    if hyps.is_empty() {
        return Err(Error::InvalidArgument(format!("{} holds no hypotheses", hyp_path.as_ref().display())));
    }
    let refs = load_captions(ref_path)?;
    Ok(score_pairs(&pairs_from_records(&hyps, &refs)?))
}
