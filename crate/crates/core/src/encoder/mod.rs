//! A small post-layer-norm transformer encoder with hand-written reverse-mode
//! gradients, Adam, and a binary checkpoint format. All arithmetic is `f64`.

mod adam;
mod checkpoint;
mod config;
mod model;
mod params;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, FORMAT_VERSION, MAGIC};
pub use config::{ApInput, EncoderConfig};
pub use model::{EncoderOutput, Mode};
pub use params::{EncoderParams, LayerParams};
pub use tensor::Tensor;
