//! Attentive image captioning: a feature grid goes through additive
//! attention into a GRU decoder trained with Adam on a reverse-mode tape.
//!
//! Also here: skip-gram word vectors, greedy and beam decoding, and the
//! usual caption metrics.

pub mod attention;
pub mod cli;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod fixture;
pub mod gradcheck;
pub mod inference;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod text;
pub mod trainer;
pub mod word2vec;

pub use encoder::{EncoderKind, EncoderSpec, FeatureGrid};
pub use error::{Error, Result};
pub use inference::{DecodeConfig, DecodedCaption};
pub use metrics::ScoreReport;
pub use model::{CaptionModel, ModelDims, ModelParameters};
pub use tensor::{Tensor, TensorError};
pub use text::Vocabulary;
pub use trainer::{load_checkpoint, save_checkpoint, TrainConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
