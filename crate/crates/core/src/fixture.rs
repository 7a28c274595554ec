//! Synthetic image/caption pairs for tests and demos.
//!
//! Each image is an 8×8 RGB canvas with one colored shape in one of four
//! places. The toy conv encoder turns it into a 16×8 feature grid, and the
//! caption names the color, the shape and the place, so captions are a
//! deterministic function of the pixels.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{toy_encode_grid, write_feature_grid, Activation, ConvLayer, FeatureGrid, EXTENSION};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::text::{parse_captions, CaptionRecord};
use crate::trainer::TrainConfig;

pub const IMAGE_SIDE: usize = 8;
pub const FEATURE_CHANNELS: usize = 8;

const COLORS: [(&str, [f64; 3]); 4] = [
    ("red", [1.0, 0.0, 0.0]),
    ("green", [0.0, 1.0, 0.0]),
    ("blue", [0.0, 0.0, 1.0]),
    ("yellow", [1.0, 1.0, 0.0]),
];

const SHAPES: [(&str, [[bool; 3]; 3]); 3] = [
    ("square", [[true; 3]; 3]),
    ("cross", [[false, true, false], [true, true, true], [false, true, false]]),
    ("bar", [[false; 3], [true; 3], [false; 3]]),
];

// Top-left corner of the 3×3 shape.
const PLACES: [(&str, (usize, usize)); 4] = [
    ("left", (2, 0)),
    ("right", (2, 5)),
    ("top", (0, 2)),
    ("bottom", (5, 2)),
];

pub const MAX_IMAGES: usize = COLORS.len() * SHAPES.len() * PLACES.len();

#[derive(Debug, Clone)]
pub struct Fixture {
    pub grids: Vec<FeatureGrid>,
    pub captions: Vec<CaptionRecord>,
}

fn draw(color: [f64; 3], shape: &[[bool; 3]; 3], at: (usize, usize), rng: &mut ChaCha8Rng) -> Tensor {
    let mut img = Tensor::zeros(&[IMAGE_SIDE, IMAGE_SIDE, 3]);
    let data = img.data_mut();
    for v in data.iter_mut() {
        *v = rng.gen_range(0.0..0.05);
    }
    for (dr, row) in shape.iter().enumerate() {
        for (dc, &on) in row.iter().enumerate() {
            if on {
                let base = ((at.0 + dr) * IMAGE_SIDE + at.1 + dc) * 3;
                data[base..base + 3].copy_from_slice(&color);
            }
        }
    }
    img
}

/// `n` distinct scenes chosen and rendered with `seed`.
pub fn generate(n: usize, seed: u64) -> Result<Fixture> {
    if n == 0 || n > MAX_IMAGES {
        return Err(Error::InvalidArgument(format!("fixture size must be in 1..={MAX_IMAGES}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = [
        ConvLayer::random(FEATURE_CHANNELS, 3, 3, 1, Activation::Relu, &mut rng)?,
        ConvLayer::random(FEATURE_CHANNELS, 3, FEATURE_CHANNELS, 1, Activation::Identity, &mut rng)?,
    ];
    let mut scenes: Vec<(usize, usize, usize)> = (0..COLORS.len())
        .flat_map(|c| (0..SHAPES.len()).flat_map(move |s| (0..PLACES.len()).map(move |p| (c, s, p))))
        .collect();
    scenes.shuffle(&mut rng);
    scenes.truncate(n);

    let mut grids = Vec::with_capacity(n);
    let mut lines = String::new();
    for (i, &(c, s, p)) in scenes.iter().enumerate() {
        let id = format!("img{i:02}");
        let img = draw(COLORS[c].1, &SHAPES[s].1, PLACES[p].1, &mut rng);
        let mut grid = toy_encode_grid(&id, &img, &layers)?;
        // SAF1 stores f32; round now so in-memory and on-disk grids agree
        for v in grid.values.data_mut() {
            *v = f64::from(*v as f32);
        }
        grids.push(grid);
        lines.push_str(&format!("{id}\ta {} {} at the {}\n", COLORS[c].0, SHAPES[s].0, PLACES[p].0));
    }
    Ok(Fixture {
        grids,
        captions: parse_captions(&lines)?,
    })
}

/// Training settings under which the fixture is memorized quickly.
pub fn suggested_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 500,
        batch_size: 8,
        lr: 0.01,
        seed,
        embed_dim: 16,
        hidden_dim: 32,
        attention_dim: 16,
        min_count: 1,
        ..TrainConfig::default()
    }
}

/// Writes `features/<id>.saf`, `captions.tsv` and `train.cfg` under `dir`.
pub fn write(dir: impl AsRef<Path>, fixture: &Fixture, config: &TrainConfig) -> Result<()> {
    let dir = dir.as_ref();
    let features = dir.join("features");
    std::fs::create_dir_all(&features).map_err(|e| Error::io(&features, e))?;
    for g in &fixture.grids {
        write_feature_grid(features.join(format!("{}.{EXTENSION}", g.image_id)), g)?;
    }
    let captions: String = fixture
        .captions
        .iter()
        .map(|r| format!("{}\t{}\n", r.image_id, r.raw))
        .collect();
    let path = dir.join("captions.tsv");
    std::fs::write(&path, captions).map_err(|e| Error::io(&path, e))?;
    let path = dir.join("train.cfg");
    std::fs::write(&path, config.to_kv()).map_err(|e| Error::io(&path, e))?;
    Ok(())
}
