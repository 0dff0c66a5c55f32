//! Binary64 tensors, the layer kinds the networks use, reverse-mode
//! gradients, the optimizer and checkpoint files.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
mod tensor;


use thiserror::Error;

pub use checkpoint::{load_checkpoint, restore_into, save_checkpoint, CheckpointHeader};
pub use layers::{Activation, LayerConfig};
pub use optim::Adam;
pub use params::{Layer, ParamId, ParamStore, Parameter, Sequential};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{op}: expected shape {expected:?}, got {got:?}")]
    Shape {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("{op}: non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward called without a recorded forward pass")]
    NoForward,
    #[error("{0} layer has no parameters bound")]
    MissingParameters(&'static str),
    #[error("non-finite gradient for {0}; step rejected")]
    NonFiniteGradient(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O on {0}: {1}")]
    Io(String, std::io::Error),
}
