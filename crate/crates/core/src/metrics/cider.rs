use std::collections::{HashMap, HashSet};

use super::ngram::{ngrams, Counts};
use super::EvalPair;

pub const MAX_N: usize = 4;
pub const SCALE: f64 = 10.0;

fn tfidf<'a>(counts: &Counts<'a>, df: &HashMap<&[String], usize>, log_n: f64) -> HashMap<&'a [String], f64> {
    counts
        .iter()
        .map(|(&g, &c)| {
            let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
            (g, c as f64 * (log_n - d.ln()))
        })
        .collect()
}

fn cosine(a: &HashMap<&[String], f64>, b: &HashMap<&[String], f64>) -> f64 {
    let dot: f64 = a.iter().map(|(g, x)| x * b.get(g).copied().unwrap_or(0.0)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// CIDEr over the whole corpus: TF-IDF cosine per `n`-gram order, averaged
/// over references and over `n = 1..4`, times 10, then averaged over pairs.
/// Document frequencies count images whose references contain the `n`-gram.
pub fn cider(pairs: &[EvalPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let log_n = (pairs.len() as f64).ln();
    let mut per_pair = vec![0.0; pairs.len()];
    for n in 1..=MAX_N {
        let mut df: HashMap<&[String], usize> = HashMap::new();
        for p in pairs {
            let seen: HashSet<&[String]> = p.references.iter().flat_map(|r| ngrams(r, n).into_keys()).collect();
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        for (i, p) in pairs.iter().enumerate() {
            let h = tfidf(&ngrams(&p.hypothesis, n), &df, log_n);
            let sum: f64 = p
                .references
                .iter()
                .map(|r| cosine(&h, &tfidf(&ngrams(r, n), &df, log_n)))
                .sum();
            per_pair[i] += sum / p.references.len() as f64;
        }
    }
    let mean_pair = |s: f64| SCALE * s / MAX_N as f64;
    per_pair.into_iter().map(mean_pair).sum::<f64>() / pairs.len() as f64
}
