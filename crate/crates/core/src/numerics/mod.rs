//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive applied during one forward pass and
//! replays them in exact reverse order on [`Tape::backward`]. Parameters
//! live in a [`ParamStore`] outside the tape and are bound to it lazily, so
//! a fresh tape per batch costs one copy of each parameter that is used.

mod gradcheck;
mod init;
mod nn;
mod optim;
mod params;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_inputs, GradCheckReport};
pub use init::{normal, xavier_uniform};
pub use nn::{
    sinusoidal_positional_encoding, Embedding, LayerNorm, Linear, Mlp, MultiHeadSelfAttention,
    TransformerBlock,
};
pub use optim::{adam_step, Adam, AdamConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use scalar::{DType, Scalar};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ShapeError, Tensor};
