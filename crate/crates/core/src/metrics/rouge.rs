use super::ngram::lcs_len;
use super::EvalPair;

pub const BETA: f64 = 1.2;

/// LCS F-measure of one hypothesis against one reference.
pub fn rouge_l_single(hyp: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_len(hyp, reference);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / hyp.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    let b2 = BETA * BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Mean over pairs of the best reference's ROUGE-L.
pub fn rouge_l(pairs: &[EvalPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            p.references
                .iter()
                .map(|r| rouge_l_single(&p.hypothesis, r))
                .fold(0.0, f64::max)
        })
        .sum();
    sum / pairs.len() as f64
}
