mod common;

use captor::fixture::suggested_config;
use captor::inference::greedy_decode;
use captor::model::{ModelDims, ModelParameters};
use captor::trainer::{train, TrainConfig};
use captor::Error;
use common::{fixture_data, trained_fixture, FIXTURE_SEED};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fixture_is_memorized() {
    let out = trained_fixture();
    assert_eq!(out.history.len(), 500);
    let last = *out.history.last().unwrap();
    assert!(last < 0.05, "final NLL {last}");
    let fx = fixture_data();
    for (grid, rec) in fx.grids.iter().zip(&fx.captions) {
        let cap = greedy_decode(&out.model, grid, 20).unwrap();
        assert_eq!(cap.tokens, rec.tokens, "{}", grid.image_id);
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let fx = fixture_data();
    let cfg = TrainConfig { epochs: 15, ..suggested_config(FIXTURE_SEED) };
    let a = train(&fx.grids, &fx.captions, &cfg).unwrap();
    let b = train(&fx.grids, &fx.captions, &cfg).unwrap();
    let bits = |h: &[f64]| h.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.history), bits(&b.history));
    assert_eq!(a.model, b.model);
    let c = train(&fx.grids, &fx.captions, &TrainConfig { seed: 7, ..cfg }).unwrap();
    assert_ne!(bits(&a.history), bits(&c.history));
}

#[test]
fn zero_learning_rate_keeps_history_flat() {
    let fx = fixture_data();
    let cfg = TrainConfig { epochs: 6, lr: 0.0, ..suggested_config(3) };
    let out = train(&fx.grids, &fx.captions, &cfg).unwrap();
    for v in &out.history {
        assert!((v - out.history[0]).abs() < 1e-12);
    }
}

#[test]
fn exploding_learning_rate_is_a_numeric_error() {
    let fx = fixture_data();
    let cfg = TrainConfig { epochs: 50, lr: 1e300, grad_clip_norm: 1e300, ..suggested_config(3) };
    match train(&fx.grids, &fx.captions, &cfg) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("epoch"), "{msg}"),
        other => panic!("expected a numeric failure, got {other:?}"),
    }
}

#[test]
fn geometry_mismatch_is_rejected() {
    let fx = fixture_data();
    let cfg = TrainConfig { encoder: captor::EncoderKind::Vgg16, ..suggested_config(1) };
    assert!(matches!(train(&fx.grids, &fx.captions, &cfg), Err(Error::Format(_))));
}

fn formula(d: &ModelDims) -> usize {
    let (k, dd, e, h, a) = (d.vocab, d.feature, d.embed, d.hidden, d.attention);
    let x = e + a;
    k * e               // embeddings
        + dd * a + a    // projection
        + dd * h + h    // initial state
        + h * a + a * a + a + a // attention
        + 3 * (x * h + h * h + h) // GRU gates
        + h * k + k // output head
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn parameter_count_formula(
        vocab in 5usize..40,
        feature in 1usize..20,
        embed in 1usize..20,
        hidden in 1usize..20,
        attention in 1usize..20,
    ) {
        let dims = ModelDims { vocab, feature, embed, hidden, attention };
        let p = ModelParameters::init(&dims, &mut ChaCha8Rng::seed_from_u64(0));
        prop_assert_eq!(p.count(), formula(&dims));
        prop_assert_eq!(p.dims(), dims);
    }
}
