//! Image-side inputs: the L×D annotation grid, where it comes from, and the
//! two learned maps that turn it into attention keys and the first decoder
//! state.

mod saf;
mod toy;

use std::fmt;
use std::str::FromStr;

pub use saf::{
    decode as decode_saf, encode as encode_saf, feature_files, load_feature_grid, load_features,
    write_feature_grid, SafError, EXTENSION, MAGIC as SAF_MAGIC,
};
pub use toy::{toy_encode, toy_encode_grid, Activation, ConvLayer};

use crate::error::{Error, Result};
use crate::tensor::{Ops, Tensor, TensorError};

/// Annotation vectors of one image: `values` is `[L, D]`, one row per
/// spatial location.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    pub image_id: String,
    pub values: Tensor,
}

impl FeatureGrid {
    pub fn new(image_id: impl Into<String>, values: Tensor) -> Result<Self> {
        let image_id = image_id.into();
        if image_id.is_empty() {
            return Err(Error::InvalidArgument("feature grid needs an image id".into()));
        }
        if values.rank() != 2 {
            return Err(Error::InvalidArgument(format!(
                "feature grid must be [L, D], got {:?}",
                values.shape()
            )));
        }
        if !values.is_finite() {
            return Err(Error::Numeric(format!("non-finite features for {image_id}")));
        }
        Ok(Self { image_id, values })
    }

    pub fn locations(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    InceptionV3,
    Resnet101,
    Densenet169,
    Vgg16,
    Toy,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 5] = [
        EncoderKind::InceptionV3,
        EncoderKind::Resnet101,
        EncoderKind::Densenet169,
        EncoderKind::Vgg16,
        EncoderKind::Toy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::InceptionV3 => "inception_v3",
            EncoderKind::Resnet101 => "resnet101",
            EncoderKind::Densenet169 => "densenet169",
            EncoderKind::Vgg16 => "vgg16",
            EncoderKind::Toy => "toy",
        }
    }

    /// Fixed (L, D) of the pretrained backbones; `None` for the toy encoder.
    pub fn geometry(self) -> Option<(usize, usize)> {
        match self {
            EncoderKind::InceptionV3 | EncoderKind::Resnet101 => Some((49, 2048)),
            EncoderKind::Densenet169 => Some((49, 1664)),
            EncoderKind::Vgg16 => Some((49, 512)),
            EncoderKind::Toy => None,
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown encoder {s:?}")))
    }
}

/// Which encoder produced the features, and the grid geometry it implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub locations: usize,
    pub channels: usize,
}

impl EncoderSpec {
    pub fn pretrained(kind: EncoderKind) -> Result<Self> {
        let (locations, channels) = kind.geometry().ok_or_else(|| {
            Error::InvalidArgument("the toy encoder has no fixed geometry".into())
        })?;
        Ok(Self {
            kind,
            locations,
            channels,
        })
    }

    pub fn toy(locations: usize, channels: usize) -> Self {
        Self {
            kind: EncoderKind::Toy,
            locations,
            channels,
        }
    }

    /// Builds a spec for `kind`, taking toy geometry from `grid`.
    pub fn for_grid(kind: EncoderKind, grid: &FeatureGrid) -> Result<Self> {
        let spec = match kind {
            EncoderKind::Toy => Self::toy(grid.locations(), grid.channels()),
            k => Self::pretrained(k)?,
        };
        spec.validate(grid)?;
        Ok(spec)
    }

    /// Rejects a grid whose geometry does not match this encoder.
    pub fn validate(&self, grid: &FeatureGrid) -> Result<()> {
        if (grid.locations(), grid.channels()) != (self.locations, self.channels) {
            return Err(Error::Format(format!(
                "{}: grid is {}x{}, encoder {} produces {}x{}",
                grid.image_id,
                grid.locations(),
                grid.channels(),
                self.kind,
                self.locations,
                self.channels
            )));
        }
        Ok(())
    }
}

/// Per-location affine map `grid · W_p + b_p` into the attention space.
pub fn project<O: Ops>(ops: &mut O, grid: &O::V, w_p: &O::V, b_p: &O::V) -> Result<O::V, TensorError> {
    let z = ops.matmul(grid, w_p)?;
    ops.add(&z, b_p)
}

/// First decoder state: `tanh(mean_L(grid) · W_h + b_h)`.
pub fn init_hidden<O: Ops>(ops: &mut O, grid: &O::V, w_h: &O::V, b_h: &O::V) -> Result<O::V, TensorError> {
    let locations = ops.value(grid).shape()[0];
    let summed = ops.sum_axis(grid, 0)?;
    let mean = ops.scale(&summed, 1.0 / locations as f64);
    let z = ops.matmul(&mean, w_h)?;
    let z = ops.add(&z, b_h)?;
    Ok(ops.tanh(&z))
}
