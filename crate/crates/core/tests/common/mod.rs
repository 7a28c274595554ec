//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use captor::decoder::GruParams;
use captor::fixture::{self, Fixture};
use captor::inference::StepModel;
use captor::metrics::EvalPair;
use captor::trainer::{train, TrainOutcome};
use captor::word2vec::{cosine, Word2VecOutcome};
use captor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, -1.0, 1.0, rng)
}

pub fn random_gru(x: usize, h: usize, rng: &mut ChaCha8Rng) -> GruParams {
    GruParams {
        w_z: uniform(&[x, h], rng),
        u_z: uniform(&[h, h], rng),
        b_z: uniform(&[h], rng),
        w_r: uniform(&[x, h], rng),
        u_r: uniform(&[h, h], rng),
        b_r: uniform(&[h], rng),
        w: uniform(&[x, h], rng),
        u: uniform(&[h, h], rng),
        b: uniform(&[h], rng),
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `Σ_i x_i M[i][j] + Σ_k h_k N[k][j] + b_j`, one coordinate at a time.
fn affine(x: &[f64], m: &Tensor, h: &[f64], n: &Tensor, b: &Tensor, j: usize) -> f64 {
    let mut acc = b.data()[j];
    for (i, xi) in x.iter().enumerate() {
        acc += xi * m.get2(i, j);
    }
    for (k, hk) in h.iter().enumerate() {
        acc += hk * n.get2(k, j);
    }
    acc
}

/// Scalar GRU step. Returns the new state and the candidate.
pub fn scalar_gru(x: &[f64], h: &[f64], p: &GruParams) -> (Vec<f64>, Vec<f64>) {
    let hd = h.len();
    let mut out = vec![0.0; hd];
    let mut cand = vec![0.0; hd];
    for j in 0..hd {
        let z = sigmoid(affine(x, &p.w_z, h, &p.u_z, &p.b_z, j));
        let r = sigmoid(affine(x, &p.w_r, h, &p.u_r, &p.b_r, j));
        let mut xw = p.b.data()[j];
        for (i, xi) in x.iter().enumerate() {
            xw += xi * p.w.get2(i, j);
        }
        let mut hu = 0.0;
        for (k, hk) in h.iter().enumerate() {
            hu += hk * p.u.get2(k, j);
        }
        cand[j] = (xw + r * hu).tanh();
        out[j] = z * h[j] + (1.0 - z) * cand[j];
    }
    (out, cand)
}

fn ngram_strings(tokens: &[String], n: usize) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            *out.entry(tokens[i..i + n].join(" ")).or_insert(0.0) += 1.0;
        }
    }
    out
}

/// CIDEr from explicit per-image n-gram tables, keyed by joined strings.
pub fn brute_cider(pairs: &[EvalPair]) -> f64 {
    let n_images = pairs.len() as f64;
    let mut total = 0.0;
    for p in pairs {
        let mut per_n = 0.0;
        for n in 1..=4 {
            let idf = |g: &str| {
                let df = pairs
                    .iter()
                    .filter(|q| q.references.iter().any(|r| ngram_strings(r, n).contains_key(g)))
                    .count();
                (n_images / (df.max(1) as f64)).ln()
            };
            let weigh = |counts: BTreeMap<String, f64>| -> BTreeMap<String, f64> {
                counts.into_iter().map(|(g, c)| {
                    let w = c * idf(&g);
                    (g, w)
                }).collect()
            };
            let hv = weigh(ngram_strings(&p.hypothesis, n));
            let mut sum = 0.0;
            for r in &p.references {
                let rv = weigh(ngram_strings(r, n));
                let keys: BTreeSet<&String> = hv.keys().chain(rv.keys()).collect();
                let (mut dot, mut nh, mut nr) = (0.0, 0.0, 0.0);
                for k in keys {
                    let a = hv.get(k).copied().unwrap_or(0.0);
                    let b = rv.get(k).copied().unwrap_or(0.0);
                    dot += a * b;
                    nh += a * a;
                    nr += b * b;
                }
                if nh > 0.0 && nr > 0.0 {
                    sum += dot / (nh.sqrt() * nr.sqrt());
                }
            }
            per_n += sum / p.references.len() as f64;
        }
        total += 10.0 * per_n / 4.0;
    }
    total / n_images
}

/// Every k-gram of the hypothesis checked against every reference by
/// direct counting.
pub fn brute_clipped(hyp: &[String], refs: &[Vec<String>], n: usize) -> usize {
    if hyp.len() < n {
        return 0;
    }
    let grams: Vec<&[String]> = hyp.windows(n).collect();
    let distinct: BTreeSet<&[String]> = grams.iter().copied().collect();
    distinct
        .into_iter()
        .map(|g| {
            let in_hyp = grams.iter().filter(|&&x| x == g).count();
            let best_ref = refs
                .iter()
                .map(|r| if r.len() < n { 0 } else { r.windows(n).filter(|&x| x == g).count() })
                .max()
                .unwrap_or(0);
            in_hyp.min(best_ref)
        })
        .sum()
}

fn log_softmax_allowed(logits: &[f64], allowed: &[usize], pick: usize) -> f64 {
    let z: f64 = allowed.iter().map(|&i| logits[i].exp()).sum();
    logits[pick] - z.ln()
}

/// Best sequence by brute force over every word sequence up to `max_len`
/// steps, either stopped by END or cut at `max_len`. Ties go to the
/// lexicographically smallest id sequence (END last).
pub fn exhaustive_best<M: StepModel>(m: &M, max_len: usize, alpha: f64) -> (Vec<usize>, bool, f64) {
    let k = m.vocab_size();
    let allowed: Vec<usize> = (0..k).filter(|&i| !matches!(i, 0 | 1 | 3)).collect();
    let words: Vec<usize> = allowed.iter().copied().filter(|&i| i != 2).collect();
    let mut best: Option<(f64, Vec<usize>, bool, f64)> = None;
    let mut consider = |ids: Vec<usize>, ended: bool| {
        let mut state = m.initial().unwrap();
        let mut prev = 1;
        let mut lp = 0.0;
        for &t in ids.iter().chain(ended.then_some(&2)) {
            let (logits, next, _) = m.step(&state, prev).unwrap();
            lp += log_softmax_allowed(&logits, &allowed, t);
            state = next;
            prev = t;
        }
        let len = ids.len() + usize::from(ended);
        let score = if alpha == 0.0 { lp } else { lp / (len.max(1) as f64).powf(alpha) };
        let key: Vec<usize> = ids.iter().copied().chain(ended.then_some(2)).collect();
        let better = match &best {
            None => true,
            Some((s, seq, e, _)) => {
                let other: Vec<usize> = seq.iter().copied().chain(e.then_some(2)).collect();
                score > *s || (score == *s && key < other)
            }
        };
        if better {
            best = Some((score, ids, ended, lp));
        }
    };
    // sequences of n words followed by END (n < max_len), or exactly max_len words
    let mut frontier: Vec<Vec<usize>> = vec![vec![]];
    for n in 0..=max_len {
        for seq in &frontier {
            if n < max_len {
                consider(seq.clone(), true);
            } else {
                consider(seq.clone(), false);
            }
        }
        if n < max_len {
            frontier = frontier
                .iter()
                .flat_map(|s| words.iter().map(move |&w| {
                    let mut v = s.clone();
                    v.push(w);
                    v
                }))
                .collect();
        }
    }
    let (_, ids, ended, lp) = best.unwrap();
    (ids, ended, lp)
}

/// Fixed-table toy model: logits depend on the previous token only.
pub struct TableModel(pub Vec<Vec<f64>>);

impl StepModel for TableModel {
    type State = ();
    fn vocab_size(&self) -> usize {
        self.0[0].len()
    }
    fn initial(&self) -> captor::Result<()> {
        Ok(())
    }
    fn step(&self, _: &(), prev: usize) -> captor::Result<(Vec<f64>, (), Vec<f64>)> {
        Ok((self.0[prev].clone(), (), vec![1.0]))
    }
}

/// A 3-token model: END plus two words (ids 4 and 5) over the reserved ids.
pub fn three_token_model(rng: &mut ChaCha8Rng) -> TableModel {
    TableModel(
        (0..6)
            .map(|_| (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect(),
    )
}

pub const FIXTURE_SEED: u64 = 42;

pub fn fixture_data() -> &'static Fixture {
    static FX: OnceLock<Fixture> = OnceLock::new();
    FX.get_or_init(|| fixture::generate(8, FIXTURE_SEED).unwrap())
}

/// The fixture model trained once per test binary.
pub fn trained_fixture() -> &'static TrainOutcome {
    static OUT: OnceLock<TrainOutcome> = OnceLock::new();
    OUT.get_or_init(|| {
        let fx = fixture_data();
        train(&fx.grids, &fx.captions, &fixture::suggested_config(FIXTURE_SEED)).unwrap()
    })
}

pub fn words(s: &str) -> Vec<String> {
    captor::text::normalize(s)
}

pub const W2V_CORPUS: &str = "This research paper is about deep learning and computer vision.\n\
We love deep learning.\n\
We love computer vision.\n";

/// Mean cosine of word pairs that share a window versus pairs that never do.
pub fn cooccurrence_means(corpus: &[Vec<String>], window: usize, out: &Word2VecOutcome) -> (f64, f64) {
    let mut together = BTreeSet::new();
    for s in corpus {
        for i in 0..s.len() {
            for j in 0..s.len() {
                if i != j && i.abs_diff(j) <= window && s[i] != s[j] {
                    together.insert((s[i].as_str(), s[j].as_str()));
                }
            }
        }
    }
    let vocab: BTreeSet<&str> = corpus.iter().flatten().map(String::as_str).collect();
    let (mut co, mut never) = (Vec::new(), Vec::new());
    for a in &vocab {
        for b in vocab.range::<&str, _>((std::ops::Bound::Excluded(a), std::ops::Bound::Unbounded)) {
            let sim = cosine(out.vector(a).unwrap(), out.vector(b).unwrap());
            if together.contains(&(*a, *b)) {
                co.push(sim);
            } else {
                never.push(sim);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (mean(&co), mean(&never))
}
