mod common;

use captor::inference::{
    beam_search, caption_batch, greedy_decode, greedy_search, masked_log_softmax, rescore, DecodeConfig,
    GridDecoder, StepModel,
};
use common::{exhaustive_best, three_token_model, trained_fixture, fixture_data, TableModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Teacher-forced log-probability computed from raw logits with its own
/// log-sum-exp over the emittable ids.
fn independent_log_prob<M: StepModel>(m: &M, ids: &[usize], ended: bool) -> f64 {
    let mut state = m.initial().unwrap();
    let mut prev = 1;
    let mut total = 0.0;
    for &t in ids.iter().chain(ended.then_some(&2)) {
        let (logits, next, _) = m.step(&state, prev).unwrap();
        let z: f64 = logits
            .iter()
            .enumerate()
            .filter(|(i, _)| ![0, 1, 3].contains(i))
            .map(|(_, v)| v.exp())
            .sum();
        total += logits[t] - z.ln();
        state = next;
        prev = t;
    }
    total
}

#[test]
fn beam_matches_exhaustive_search_on_three_token_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let m = three_token_model(&mut rng);
        for alpha in [0.0, 0.7] {
            let (ids, ended, lp) = exhaustive_best(&m, 4, alpha);
            // 3 emittable tokens over 4 steps never exceed 3^4 live candidates
            let got = beam_search(&m, 81, 4, alpha).unwrap();
            assert_eq!((&got.ids, got.ended), (&ids, ended), "alpha {alpha}");
            assert!((got.log_prob - lp).abs() < 1e-9);
        }
    }
}

#[test]
fn beam_one_equals_greedy_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..200 {
        let m = three_token_model(&mut rng);
        for max_len in 1..6 {
            assert_eq!(greedy_search(&m, max_len).unwrap(), beam_search(&m, 1, max_len, 0.0).unwrap());
        }
    }
}

#[test]
fn trained_model_decoding_oracles() {
    let out = trained_fixture();
    let model = &out.model;
    for grid in &fixture_data().grids {
        let dec = GridDecoder::new(model, grid).unwrap();
        let g = greedy_search(&dec, 20).unwrap();
        let b1 = beam_search(&dec, 1, 20, 0.0).unwrap();
        assert_eq!(g, b1);
        let b3 = beam_search(&dec, 3, 20, 0.0).unwrap();
        assert!(b3.log_prob >= g.log_prob - 1e-12);

        for h in [&g, &b3] {
            let want = independent_log_prob(&dec, &h.ids, h.ended);
            assert!((h.log_prob - want).abs() < 1e-9);
            assert!((rescore(&dec, &h.ids, h.ended).unwrap() - want).abs() < 1e-9);
            assert!(h.log_prob <= 0.0);
            assert_eq!(h.alphas.len(), h.ids.len());
            for a in &h.alphas {
                assert!(a.iter().all(|&w| w >= 0.0));
                assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn batch_is_per_image_map() {
    let model = &trained_fixture().model;
    let grids = &fixture_data().grids;
    let cfg = DecodeConfig::default();
    assert!(caption_batch(model, &[], &cfg).is_empty());

    let mut doubled = grids.clone();
    doubled.push(grids[0].clone());
    let batch = caption_batch(model, &doubled, &cfg);
    for (g, c) in doubled.iter().zip(&batch) {
        assert_eq!(c.as_ref().unwrap(), &greedy_decode(model, g, cfg.max_len).unwrap());
    }
    assert_eq!(batch[0].as_ref().unwrap(), batch.last().unwrap().as_ref().unwrap());

    // a bad grid fails alone
    let mut mixed = grids[..2].to_vec();
    mixed.insert(1, captor::FeatureGrid::new("bad", captor::Tensor::zeros(&[3, 2])).unwrap());
    let res = caption_batch(model, &mixed, &cfg);
    assert!(res[0].is_ok() && res[1].is_err() && res[2].is_ok());
}

#[test]
fn unk_is_never_emitted() {
    // UNK has by far the largest logit
    let m = TableModel(vec![vec![0.0, 0.0, -1.0, 50.0, 0.0, 0.5]; 6]);
    let h = greedy_search(&m, 5).unwrap();
    assert!(!h.ids.contains(&3));
    assert!(masked_log_softmax(&m.0[0])[3].is_infinite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn wide_beam_is_never_worse_than_greedy_without_pruning(seed in any::<u64>(), max_len in 1usize..5) {
        let m = three_token_model(&mut ChaCha8Rng::seed_from_u64(seed));
        let g = greedy_search(&m, max_len).unwrap();
        let b = beam_search(&m, 81, max_len, 0.0).unwrap();
        prop_assert!(b.log_prob >= g.log_prob - 1e-12);
    }
}
