//! Minimal neural-network toolkit: matrices, a reverse-mode tape, layers,
//! and the Adam optimizer. Everything is 64-bit and single-threaded per graph.

pub mod gradcheck;
pub mod layers;
pub mod params;
pub mod tape;
pub mod tensor;

pub use layers::{
    sinusoidal_embed, EncoderBlock, LayerNorm, Linear, Mlp, MultiHeadAttention, SetEncoder,
};
pub use params::{
    adam_step, AdamConfig, Checkpoint, Gradients, Init, ParamId, ParameterStore, StepStats,
};
pub use tape::{log_sum_exp, softmax_rows, Tape, Var};
pub use tensor::Matrix;
