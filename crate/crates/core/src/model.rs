//! The trainable parameter set and the checkpointable caption model.

use std::collections::BTreeMap;

use rand::Rng;

use crate::attention::AttentionParams;
use crate::decoder::{GruParams, OutputHead};
use crate::encoder::{EncoderSpec, FeatureGrid};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::text::Vocabulary;
use crate::trainer::TrainConfig;

/// Layer sizes of a caption model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// K, control tokens included.
    pub vocab: usize,
    /// D, channels per annotation vector.
    pub feature: usize,
    pub embed: usize,
    pub hidden: usize,
    pub attention: usize,
}

impl ModelDims {
    pub fn gru_input(&self) -> usize {
        self.embed + self.attention
    }
}

/// Every trainable tensor of the model. `V` is `Tensor` for stored weights
/// and a tape handle while training.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<V = Tensor> {
    /// `[K, E]` word embeddings.
    pub embed: V,
    /// `[D, A]`, `[A]`: annotation projection.
    pub proj_w: V,
    pub proj_b: V,
    /// `[D, H]`, `[H]`: initial state from the mean annotation.
    pub init_w: V,
    pub init_b: V,
    pub att: AttentionParams<V>,
    pub gru: GruParams<V>,
    pub head: OutputHead<V>,
}

impl<V> Params<V> {
    /// `(name, value)` for every parameter, in a fixed order.
    pub fn named(&self) -> Vec<(&'static str, &V)> {
        vec![
            ("embed", &self.embed),
            ("proj.w", &self.proj_w),
            ("proj.b", &self.proj_b),
            ("init.w", &self.init_w),
            ("init.b", &self.init_b),
            ("att.w_dec", &self.att.w_dec),
            ("att.w_enc", &self.att.w_enc),
            ("att.b", &self.att.b),
            ("att.v", &self.att.v),
            ("gru.w_z", &self.gru.w_z),
            ("gru.u_z", &self.gru.u_z),
            ("gru.b_z", &self.gru.b_z),
            ("gru.w_r", &self.gru.w_r),
            ("gru.u_r", &self.gru.u_r),
            ("gru.b_r", &self.gru.b_r),
            ("gru.w", &self.gru.w),
            ("gru.u", &self.gru.u),
            ("gru.b", &self.gru.b),
            ("out.w", &self.head.w),
            ("out.b", &self.head.b),
        ]
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut V)> {
        vec![
            ("embed", &mut self.embed),
            ("proj.w", &mut self.proj_w),
            ("proj.b", &mut self.proj_b),
            ("init.w", &mut self.init_w),
            ("init.b", &mut self.init_b),
            ("att.w_dec", &mut self.att.w_dec),
            ("att.w_enc", &mut self.att.w_enc),
            ("att.b", &mut self.att.b),
            ("att.v", &mut self.att.v),
            ("gru.w_z", &mut self.gru.w_z),
            ("gru.u_z", &mut self.gru.u_z),
            ("gru.b_z", &mut self.gru.b_z),
            ("gru.w_r", &mut self.gru.w_r),
            ("gru.u_r", &mut self.gru.u_r),
            ("gru.b_r", &mut self.gru.b_r),
            ("gru.w", &mut self.gru.w),
            ("gru.u", &mut self.gru.u),
            ("gru.b", &mut self.gru.b),
            ("out.w", &mut self.head.w),
            ("out.b", &mut self.head.b),
        ]
    }

    /// Applies `f` to every parameter, keeping the structure.
    pub fn map<U>(&self, mut f: impl FnMut(&'static str, &V) -> U) -> Params<U> {
        Params {
            embed: f("embed", &self.embed),
            proj_w: f("proj.w", &self.proj_w),
            proj_b: f("proj.b", &self.proj_b),
            init_w: f("init.w", &self.init_w),
            init_b: f("init.b", &self.init_b),
            att: AttentionParams {
                w_dec: f("att.w_dec", &self.att.w_dec),
                w_enc: f("att.w_enc", &self.att.w_enc),
                b: f("att.b", &self.att.b),
                v: f("att.v", &self.att.v),
            },
            gru: GruParams {
                w_z: f("gru.w_z", &self.gru.w_z),
                u_z: f("gru.u_z", &self.gru.u_z),
                b_z: f("gru.b_z", &self.gru.b_z),
                w_r: f("gru.w_r", &self.gru.w_r),
                u_r: f("gru.u_r", &self.gru.u_r),
                b_r: f("gru.b_r", &self.gru.b_r),
                w: f("gru.w", &self.gru.w),
                u: f("gru.u", &self.gru.u),
                b: f("gru.b", &self.gru.b),
            },
            head: OutputHead {
                w: f("out.w", &self.head.w),
                b: f("out.b", &self.head.b),
            },
        }
    }
}

/// Stored model weights.
pub type ModelParameters = Params<Tensor>;

fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::uniform(&[rows, cols], -bound, bound, rng)
}

impl ModelParameters {
    /// Xavier-uniform weights and zero biases.
    pub fn init(dims: &ModelDims, rng: &mut impl Rng) -> Self {
        let ModelDims {
            vocab: k,
            feature: d,
            embed: e,
            hidden: h,
            attention: a,
        } = *dims;
        let x = dims.gru_input();
        Params {
            embed: xavier(k, e, rng),
            proj_w: xavier(d, a, rng),
            proj_b: Tensor::zeros(&[a]),
            init_w: xavier(d, h, rng),
            init_b: Tensor::zeros(&[h]),
            att: AttentionParams {
                w_dec: xavier(h, a, rng),
                w_enc: xavier(a, a, rng),
                b: Tensor::zeros(&[a]),
                v: xavier(a, 1, rng),
            },
            gru: GruParams {
                w_z: xavier(x, h, rng),
                u_z: xavier(h, h, rng),
                b_z: Tensor::zeros(&[h]),
                w_r: xavier(x, h, rng),
                u_r: xavier(h, h, rng),
                b_r: Tensor::zeros(&[h]),
                w: xavier(x, h, rng),
                u: xavier(h, h, rng),
                b: Tensor::zeros(&[h]),
            },
            head: OutputHead {
                w: xavier(h, k, rng),
                b: Tensor::zeros(&[k]),
            },
        }
    }

    /// Reads the layer sizes back from the tensor shapes.
    pub fn dims(&self) -> ModelDims {
        ModelDims {
            vocab: self.embed.shape()[0],
            embed: self.embed.shape()[1],
            feature: self.proj_w.shape()[0],
            attention: self.proj_w.shape()[1],
            hidden: self.init_w.shape()[1],
        }
    }

    /// Checks every tensor against the shapes implied by `dims()`.
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("embed", &self.embed), ("proj.w", &self.proj_w), ("init.w", &self.init_w)] {
            if t.rank() != 2 {
                return Err(Error::Format(format!("parameter {name} must be a matrix")));
            }
        }
        let d = self.dims();
        let x = d.gru_input();
        let expected: BTreeMap<&str, Vec<usize>> = [
            ("embed", vec![d.vocab, d.embed]),
            ("proj.w", vec![d.feature, d.attention]),
            ("proj.b", vec![d.attention]),
            ("init.w", vec![d.feature, d.hidden]),
            ("init.b", vec![d.hidden]),
            ("att.w_dec", vec![d.hidden, d.attention]),
            ("att.w_enc", vec![d.attention, d.attention]),
            ("att.b", vec![d.attention]),
            ("att.v", vec![d.attention, 1]),
            ("gru.w_z", vec![x, d.hidden]),
            ("gru.u_z", vec![d.hidden, d.hidden]),
            ("gru.b_z", vec![d.hidden]),
            ("gru.w_r", vec![x, d.hidden]),
            ("gru.u_r", vec![d.hidden, d.hidden]),
            ("gru.b_r", vec![d.hidden]),
            ("gru.w", vec![x, d.hidden]),
            ("gru.u", vec![d.hidden, d.hidden]),
            ("gru.b", vec![d.hidden]),
            ("out.w", vec![d.hidden, d.vocab]),
            ("out.b", vec![d.vocab]),
        ]
        .into_iter()
        .collect();
        for (name, t) in self.named() {
            if t.shape() != expected[name].as_slice() {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    expected[name]
                )));
            }
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    /// Builds from a name → tensor map; every name must be present once.
    pub fn from_named(mut map: BTreeMap<String, Tensor>) -> Result<Self> {
        let mut take = |name: &str| {
            map.remove(name)
                .ok_or_else(|| Error::Format(format!("missing parameter {name}")))
        };
        let params = Params {
            embed: take("embed")?,
            proj_w: take("proj.w")?,
            proj_b: take("proj.b")?,
            init_w: take("init.w")?,
            init_b: take("init.b")?,
            att: AttentionParams {
                w_dec: take("att.w_dec")?,
                w_enc: take("att.w_enc")?,
                b: take("att.b")?,
                v: take("att.v")?,
            },
            gru: GruParams {
                w_z: take("gru.w_z")?,
                u_z: take("gru.u_z")?,
                b_z: take("gru.b_z")?,
                w_r: take("gru.w_r")?,
                u_r: take("gru.u_r")?,
                b_r: take("gru.b_r")?,
                w: take("gru.w")?,
                u: take("gru.u")?,
                b: take("gru.b")?,
            },
            head: OutputHead {
                w: take("out.w")?,
                b: take("out.b")?,
            },
        };
        if let Some(extra) = map.keys().next() {
            return Err(Error::Format(format!("unexpected parameter {extra}")));
        }
        params.validate()?;
        Ok(params)
    }
}

/// A trained (or freshly initialized) caption model with everything needed
/// to decode and to resume.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionModel {
    pub vocab: Vocabulary,
    pub encoder: EncoderSpec,
    pub params: ModelParameters,
    pub config: TrainConfig,
}

impl CaptionModel {
    pub fn dims(&self) -> ModelDims {
        self.params.dims()
    }

    /// Rejects grids the model cannot consume.
    pub fn check_grid(&self, grid: &FeatureGrid) -> Result<()> {
        self.encoder.validate(grid)?;
        if grid.channels() != self.dims().feature {
            return Err(Error::Format(format!(
                "{}: grid has {} channels, model expects {}",
                grid.image_id,
                grid.channels(),
                self.dims().feature
            )));
        }
        Ok(())
    }
}
