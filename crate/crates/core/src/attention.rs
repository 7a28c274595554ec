//! Additive (Bahdanau) attention over the annotation grid.
//!
//! For decoder state `s` and projected annotation rows `f_j`:
//!
//! ```text
//! e_j = vᵀ · tanh(s·W_dec + f_j·W_enc + b)
//! α   = softmax_j(e)
//! c   = Σ_j α_j f_j
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Ops, Tensor, TensorError};

type OpResult<T> = std::result::Result<T, TensorError>;

/// `w_dec: [H, A]`, `w_enc: [A_in, A]`, `b: [A]`, `v: [A, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<V = Tensor> {
    pub w_dec: V,
    pub w_enc: V,
    pub b: V,
    pub v: V,
}

/// Annotation rows together with their state-independent half of the score,
/// `f_j·W_enc + b`, computed once per image.
#[derive(Debug, Clone)]
pub struct AttentionMemory<V> {
    pub values: V,
    pub keys: V,
}

impl<V: Clone> AttentionMemory<V> {
    pub fn new<O: Ops<V = V>>(ops: &mut O, features: &V, p: &AttentionParams<V>) -> OpResult<Self> {
        let enc = ops.matmul(features, &p.w_enc)?;
        let keys = ops.add(&enc, &p.b)?;
        Ok(Self {
            values: features.clone(),
            keys,
        })
    }
}

#[derive(Debug, Clone)]
pub struct AttentionOutput<V = Tensor> {
    /// `c_t`, shape `[A_in]`.
    pub context: V,
    /// `α`, shape `[L]`.
    pub weights: V,
}

pub fn score_memory<O: Ops>(
    ops: &mut O,
    s_prev: &O::V,
    memory: &AttentionMemory<O::V>,
    p: &AttentionParams<O::V>,
) -> OpResult<O::V> {
    let dec = ops.matmul(s_prev, &p.w_dec)?;
    let pre = ops.add(&memory.keys, &dec)?;
    let act = ops.tanh(&pre);
    let e = ops.matmul(&act, &p.v)?;
    let locations = ops.value(&e).shape()[0];
    ops.reshape(&e, &[locations])
}

/// Unnormalized scores `e`, shape `[L]`.
pub fn score<O: Ops>(
    ops: &mut O,
    s_prev: &O::V,
    features: &O::V,
    p: &AttentionParams<O::V>,
) -> OpResult<O::V> {
    let memory = AttentionMemory::new(ops, features, p)?;
    score_memory(ops, s_prev, &memory, p)
}

pub fn attend_memory<O: Ops>(
    ops: &mut O,
    s_prev: &O::V,
    memory: &AttentionMemory<O::V>,
    p: &AttentionParams<O::V>,
) -> OpResult<AttentionOutput<O::V>> {
    let e = score_memory(ops, s_prev, memory, p)?;
    let weights = ops.softmax_axis(&e, 0)?;
    let context = ops.matmul(&weights, &memory.values)?;
    Ok(AttentionOutput { context, weights })
}

pub fn attend<O: Ops>(
    ops: &mut O,
    s_prev: &O::V,
    features: &O::V,
    p: &AttentionParams<O::V>,
) -> OpResult<AttentionOutput<O::V>> {
    let memory = AttentionMemory::new(ops, features, p)?;
    attend_memory(ops, s_prev, &memory, p)
}

/// Picks the most square `h × w` factorization of `locations` (7×7 for 49).
pub fn grid_shape_for(locations: usize) -> (usize, usize) {
    let mut h = (locations as f64).sqrt() as usize;
    while h > 1 && !locations.is_multiple_of(h) {
        h -= 1;
    }
    let h = h.max(1);
    (h, locations / h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionStep {
    pub word: String,
    pub weights: Vec<f64>,
}

/// Attention weights for every generated word of one caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub image_id: String,
    pub grid: [usize; 2],
    pub steps: Vec<AttentionStep>,
}

pub fn export_attention(
    image_id: &str,
    words: &[String],
    alphas: &[Vec<f64>],
    grid: (usize, usize),
) -> Result<AttentionMap> {
    if words.len() != alphas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} words but {} attention vectors",
            words.len(),
            alphas.len()
        )));
    }
    let cells = grid.0 * grid.1;
    let mut steps = Vec::with_capacity(words.len());
    for (word, alpha) in words.iter().zip(alphas) {
        if alpha.len() != cells {
            return Err(Error::InvalidArgument(format!(
                "attention over {} locations does not fit a {}x{} grid",
                alpha.len(),
                grid.0,
                grid.1
            )));
        }
        steps.push(AttentionStep {
            word: word.clone(),
            weights: alpha.clone(),
        });
    }
    Ok(AttentionMap {
        image_id: image_id.to_owned(),
        grid: [grid.0, grid.1],
        steps,
    })
}

impl AttentionMap {
    pub fn cell(&self, step: usize, row: usize, col: usize) -> f64 {
        self.steps[step].weights[row * self.grid[1] + col]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("attention map serializes")
    }

    /// Plain (P2) PGM of one step, scaled so the step's largest weight is 255.
    pub fn to_pgm(&self, step: usize) -> String {
        let weights = &self.steps[step].weights;
        let max = weights.iter().copied().fold(0.0, f64::max);
        let [h, w] = self.grid;
        let mut out = format!("P2\n{w} {h}\n255\n");
        for r in 0..h {
            let row: Vec<String> = (0..w)
                .map(|c| {
                    let v = weights[r * w + c];
                    let px = if max > 0.0 { (255.0 * v / max).round() } else { 0.0 };
                    (px as u8).to_string()
                })
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Writes `<id>.json` and one `<id>_<step>.pgm` per word into `dir`.
    pub fn write_to_dir(&self, dir: &Path, with_pgm: bool) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let stem = sanitize_file_stem(&self.image_id);
        let write = |name: String, body: &str| -> Result<()> {
            let path = dir.join(name);
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))
        };
        write(format!("{stem}.json"), &self.to_json())?;
        if with_pgm {
            for i in 0..self.steps.len() {
                write(format!("{stem}_{i:02}.pgm"), &self.to_pgm(i))?;
            }
        }
        Ok(())
    }
}

/// Keeps `[A-Za-z0-9._-]`, replacing everything else with `_`, so image ids
/// cannot name paths outside the output directory.
pub fn sanitize_file_stem(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::GradCheck;
    use crate::tensor::{Eager, Tape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(h: usize, a_in: usize, a: usize, rng: &mut ChaCha8Rng) -> AttentionParams {
        AttentionParams {
            w_dec: Tensor::uniform(&[h, a], -1.0, 1.0, rng),
            w_enc: Tensor::uniform(&[a_in, a], -1.0, 1.0, rng),
            b: Tensor::uniform(&[a], -1.0, 1.0, rng),
            v: Tensor::uniform(&[a, 1], -1.0, 1.0, rng),
        }
    }

    #[test]
    fn zero_v_gives_zero_scores_and_mean_context() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p = params(3, 4, 5, &mut rng);
        p.v = Tensor::zeros(&[5, 1]);
        let s = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
        let f = Tensor::uniform(&[6, 4], -1.0, 1.0, &mut rng);
        assert_eq!(score(&mut Eager, &s, &f, &p).unwrap(), Tensor::zeros(&[6]));
        let out = attend(&mut Eager, &s, &f, &p).unwrap();
        let mean = f.sum_axis(0).unwrap().scale(1.0 / 6.0);
        for (a, b) in out.context.data().iter().zip(mean.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_rows_score_identically() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = params(3, 4, 5, &mut rng);
        let row = Tensor::uniform(&[1, 4], -1.0, 1.0, &mut rng);
        let f = row.concat(&row, 0).unwrap();
        let s = Tensor::uniform(&[3], -1.0, 1.0, &mut rng);
        let e = score(&mut Eager, &s, &f, &p).unwrap();
        assert_eq!(e.data()[0], e.data()[1]);
    }

    #[test]
    fn saturated_score_selects_one_row() {
        // 1-d attention space: e_j = tanh(f_j) * v with v = 50 makes a gap of ~50.
        let p = AttentionParams {
            w_dec: Tensor::zeros(&[1, 1]),
            w_enc: Tensor::full(&[1, 1], 100.0),
            b: Tensor::zeros(&[1]),
            v: Tensor::full(&[1, 1], 25.0),
        };
        let f = Tensor::matrix(3, 1, vec![1.0, -1.0, -1.0]).unwrap();
        let out = attend(&mut Eager, &Tensor::zeros(&[1]), &f, &p).unwrap();
        assert!((out.weights.data()[0] - 1.0).abs() < 1e-12);
        assert!((out.context.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn context_matches_direct_resummation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = params(4, 3, 6, &mut rng);
        let s = Tensor::uniform(&[4], -1.0, 1.0, &mut rng);
        let f = Tensor::uniform(&[7, 3], -1.0, 1.0, &mut rng);
        let out = attend(&mut Eager, &s, &f, &p).unwrap();
        let alpha = out.weights.data();
        for d in 0..3 {
            let direct: f64 = (0..7).map(|j| alpha[j] * f.get2(j, d)).sum();
            assert!((direct - out.context.data()[d]).abs() < 1e-14);
        }
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = params(3, 4, 5, &mut rng);
        let inputs = vec![
            Tensor::uniform(&[3], -2.0, 2.0, &mut rng),
            Tensor::uniform(&[6, 4], -2.0, 2.0, &mut rng),
            p.w_dec,
            p.w_enc,
            p.b,
            p.v,
        ];
        let r = GradCheck::default()
            .run(&inputs, |t: &mut Tape, v| {
                let p = AttentionParams { w_dec: v[2], w_enc: v[3], b: v[4], v: v[5] };
                let e = score(t, &v[0], &v[1], &p)?;
                Ok(t.sum_all(e))
            })
            .unwrap();
        assert!(r.max_rel_err < 1e-4, "{r:?}");
    }

    #[test]
    fn export_shapes() {
        let words: Vec<String> = vec!["a".into(), "dog".into()];
        let uniform = vec![vec![1.0 / 49.0; 49]; 2];
        let map = export_attention("img", &words, &uniform, (7, 7)).unwrap();
        assert_eq!(map.steps.len(), 2);
        assert!(map.steps[0].weights.iter().all(|&w| w == 1.0 / 49.0));

        let mut one_hot = vec![0.0; 49];
        one_hot[0] = 1.0;
        let map = export_attention("img", &words[..1], &[one_hot], (7, 7)).unwrap();
        assert_eq!(map.cell(0, 0, 0), 1.0);
        assert_eq!(map.cell(0, 3, 3), 0.0);
        assert!(export_attention("img", &words[..1], &[vec![0.5; 48]], (7, 7)).is_err());

        let json: serde_json::Value = serde_json::from_str(&map.to_json()).unwrap();
        assert_eq!(json["grid"], serde_json::json!([7, 7]));
        assert!(map.to_pgm(0).starts_with("P2\n7 7\n255\n255 0"));
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape_for(49), (7, 7));
        assert_eq!(grid_shape_for(16), (4, 4));
        assert_eq!(grid_shape_for(12), (3, 4));
        assert_eq!(grid_shape_for(7), (1, 7));
    }

    #[test]
    fn stems_stay_inside_directory() {
        assert_eq!(sanitize_file_stem("../etc/passwd"), ".._etc_passwd");
        assert_eq!(sanitize_file_stem(".."), "_..");
        assert_eq!(sanitize_file_stem("img_01"), "img_01");
    }
}
