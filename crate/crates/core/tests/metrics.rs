mod common;

use captor::metrics::{
    bleu, cider, clipped_counts, meteor_lite, rouge_l, score_files, score_pairs, EvalPair, ScoreReport,
};
use common::{brute_cider, brute_clipped, words};
use proptest::prelude::*;

fn pair(id: &str, hyp: &str, refs: &[&str]) -> EvalPair {
    EvalPair::from_text(id, hyp, refs).unwrap()
}

fn all(r: &ScoreReport) -> [f64; 7] {
    [r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l, r.cider, r.meteor]
}

#[test]
fn cider_matches_brute_force_on_two_images() {
    let pairs = vec![
        pair("a", "a dog runs on the grass", &["a dog is running on grass", "the brown dog runs"]),
        pair("b", "a cat sits on a mat", &["a cat is sitting on the mat", "cat on a mat"]),
    ];
    let got = cider(&pairs);
    let want = brute_cider(&pairs);
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    assert!(got > 0.0);
}

#[test]
fn cider_matches_brute_force_on_three_images() {
    let pairs = vec![
        pair("a", "two men play football", &["two men playing football", "men play ball in a park"]),
        pair("b", "a red car", &["a red car parked", "the car is red"]),
        pair("c", "football in the park", &["kids play football in the park"]),
    ];
    assert!((cider(&pairs) - brute_cider(&pairs)).abs() < 1e-9);
}

#[test]
fn orthogonal_hypothesis_scores_zero() {
    let pairs = vec![pair("a", "xx yy zz", &["a dog runs"]), pair("b", "qq", &["a cat sits"])];
    assert_eq!(all(&score_pairs(&pairs)), [0.0; 7]);
}

#[test]
fn identity_and_hand_values() {
    let p = vec![pair("a", "a dog runs fast", &["a dog runs fast", "something else entirely"])];
    let r = score_pairs(&p);
    assert_eq!([r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l], [1.0; 5]);
    assert_eq!(bleu(&[pair("a", "the the the the", &["the cat"])], 1), 0.25);
}

#[test]
fn score_files_of_identical_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("caps.tsv");
    std::fs::write(&path, "a\tA dog runs.\nb\ttwo cats on a mat\nc\ta red car\n").unwrap();
    let r = score_files(&path, &path).unwrap();
    assert_eq!([r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l], [1.0; 5]);
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "the"]), 1..9)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn eval_pair() -> impl Strategy<Value = EvalPair> {
    (sentence(), prop::collection::vec(sentence(), 1..4)).prop_map(|(h, r)| EvalPair {
        image_id: String::new(),
        hypothesis: h,
        references: r,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn clipping_matches_exhaustive_counter(p in eval_pair(), n in 1usize..5) {
        let (m, _) = clipped_counts(&p.hypothesis, &p.references, n);
        prop_assert_eq!(m, brute_clipped(&p.hypothesis, &p.references, n));
    }

    #[test]
    fn reference_and_pair_order_do_not_matter(pairs in prop::collection::vec(eval_pair(), 1..5)) {
        let base = score_pairs(&pairs);
        let mut rev: Vec<EvalPair> = pairs.iter().rev().cloned().collect();
        for p in &mut rev {
            p.references.reverse();
        }
        let other = score_pairs(&rev);
        for (a, b) in all(&base).iter().zip(all(&other)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deleting_overlap_never_helps(pairs in prop::collection::vec(eval_pair(), 1..5)) {
        let before = score_pairs(&pairs);
        let stripped: Vec<EvalPair> = pairs
            .iter()
            .map(|p| EvalPair {
                hypothesis: p
                    .hypothesis
                    .iter()
                    .filter(|w| !p.references.iter().any(|r| r.contains(w)))
                    .cloned()
                    .collect(),
                ..p.clone()
            })
            .collect();
        let after = score_pairs(&stripped);
        for (b, a) in all(&before).iter().zip(all(&after)) {
            prop_assert!(a <= *b + 1e-12, "{} > {}", a, b);
        }
        // per-pair as well
        for (p, s) in pairs.iter().zip(&stripped) {
            let one = |q: &EvalPair| all(&score_pairs(std::slice::from_ref(q)));
            for (b, a) in one(p).iter().zip(one(s)) {
                prop_assert!(a <= *b + 1e-12);
            }
        }
    }

    #[test]
    fn ranges(pairs in prop::collection::vec(eval_pair(), 1..5)) {
        let r = score_pairs(&pairs);
        for v in [r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge_l, r.meteor] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(r.cider >= 0.0);
        prop_assert!((cider(&pairs) - brute_cider(&pairs)).abs() < 1e-9);
    }

    #[test]
    fn identity_per_pair(h in sentence(), others in prop::collection::vec(sentence(), 0..3)) {
        let mut refs = others;
        refs.push(h.clone());
        let p = [EvalPair { image_id: String::new(), hypothesis: h.clone(), references: refs }];
        prop_assert_eq!(rouge_l(&p), 1.0);
        if h.len() >= 4 {
            prop_assert_eq!(bleu(&p, 4), 1.0);
        }
        let m = meteor_lite(&p);
        prop_assert!((0.5..1.0).contains(&m));
    }
}

#[test]
fn tokenization_is_shared() {
    let p = pair("a", "A Dog, running!", &["a dog running"]);
    assert_eq!(p.hypothesis, words("a dog running"));
    assert_eq!(rouge_l(&[p]), 1.0);
}
