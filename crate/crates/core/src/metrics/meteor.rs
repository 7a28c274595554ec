use super::EvalPair;

/// Exact-match unigram alignment as `(hyp index, ref index)` pairs, in
/// hypothesis order. A word prefers the reference slot right after its
/// predecessor's, then the leftmost free one.
pub fn align(hyp: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut out: Vec<(usize, usize)> = Vec::new();
    for (i, w) in hyp.iter().enumerate() {
        let follow = out
            .last()
            .filter(|&&(pi, _)| pi + 1 == i)
            .map(|&(_, pj)| pj + 1)
            .filter(|&j| j < reference.len() && !used[j] && &reference[j] == w);
        let pick = follow.or_else(|| (0..reference.len()).find(|&j| !used[j] && &reference[j] == w));
        if let Some(j) = pick {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

/// Runs of alignments contiguous on both sides.
pub fn chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

pub fn meteor_single(hyp: &[String], reference: &[String]) -> f64 {
    let alignment = align(hyp, reference);
    let m = alignment.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let frag = chunks(&alignment) as f64 / m as f64;
    f_mean * (1.0 - 0.5 * frag.powi(3))
}

/// Mean over pairs of the best reference's score.
pub fn meteor_lite(pairs: &[EvalPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let sum: f64 = pairs
        .iter()
        .map(|p| {
            p.references
                .iter()
                .map(|r| meteor_single(&p.hypothesis, r))
                .fold(0.0, f64::max)
        })
        .sum();
    sum / pairs.len() as f64
}
