//! Perception networks: the image encoder, the optional decoder, Adam and
//! Gumbel-softmax.

mod adam;
mod checkpoint;
mod decoder;
mod encoder;
mod gumbel;
mod init;
pub mod ops;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use decoder::{mse, DecoderNet, DecoderPass, LossRatio, Reconstruction};
pub use encoder::{EncoderNet, EncoderPass, EncoderShape, IMAGE_PIXELS, IMAGE_SIDE};
pub use gumbel::{gumbel_softmax, gumbel_softmax_backward, GumbelSample, GUMBEL_TEMPERATURE};
pub use init::{xavier_bound, xavier_uniform};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint architecture {found:#x} does not match {expected:#x}")]
    Architecture { expected: u64, found: u64 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("i/o: {0}")]
    Io(String),
}
