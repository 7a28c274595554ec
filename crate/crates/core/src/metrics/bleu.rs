use std::collections::HashMap;

use super::ngram::ngrams;
use super::EvalPair;

/// Clipped `n`-gram matches and the hypothesis `n`-gram total of one pair.
pub fn clipped_counts(hyp: &[String], refs: &[Vec<String>], n: usize) -> (usize, usize) {
    let h = ngrams(hyp, n);
    let mut max_ref: HashMap<&[String], usize> = HashMap::new();
    for r in refs {
        for (g, c) in ngrams(r, n) {
            let e = max_ref.entry(g).or_insert(0);
            *e = (*e).max(c);
        }
    }
    let matched = h.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
    let total = hyp.len().saturating_sub(n - 1);
    (matched, total)
}

/// Reference length closest to `len`, the shorter one on ties.
pub fn closest_ref_len(len: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(len), r))
        .unwrap_or(0)
}

/// Corpus BLEU-`n`, unsmoothed: any zero precision gives 0.
pub fn bleu(pairs: &[EvalPair], n: usize) -> f64 {
    assert!((1..=4).contains(&n), "BLEU order must be 1..=4");
    let mut matched = vec![0usize; n];
    let mut total = vec![0usize; n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for p in pairs {
        for k in 1..=n {
            let (m, t) = clipped_counts(&p.hypothesis, &p.references, k);
            matched[k - 1] += m;
            total[k - 1] += t;
        }
        hyp_len += p.hypothesis.len();
        ref_len += closest_ref_len(p.hypothesis.len(), &p.references);
    }
    if hyp_len == 0 || matched.iter().zip(&total).any(|(&m, &t)| m == 0 || t == 0) {
        return 0.0;
    }
    let log_p: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| (m as f64 / t as f64).ln())
        .sum::<f64>()
        / n as f64;
    let bp = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    bp * log_p.exp()
}
