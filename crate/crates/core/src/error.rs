use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::numerics::ShapeError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("label {label} is not in the active vocabulary")]
    Vocabulary { label: String },

    #[error(transparent)]
    Shape(#[from] ShapeError),

    #[error("trajectory {id} is too short: {len} states, need at least {min}")]
    TooShort { id: String, len: usize, min: usize },

    #[error("trajectory {id} has a non-uniform timestep at index {index}")]
    NonUniform { id: String, index: usize },

    #[error("trajectory {id} has a {gap:.3} s gap at index {index}; use resample_segments")]
    Gap { id: String, index: usize, gap: f64 },

    #[error("trajectory {id} timestamps are not strictly increasing at index {index}")]
    Unordered { id: String, index: usize },

    #[error("{ids} trajectory ids cannot fill {k} folds")]
    FoldCount { ids: usize, k: usize },

    #[error("invalid model spec: {0}")]
    ModelSpec(String),

    #[error("invalid train spec: {0}")]
    TrainSpec(String),

    #[error("invalid synth spec: {0}")]
    SynthSpec(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },

    #[error("closed-form future requires noiseless generation")]
    Noisy,

    #[error("parameter mismatch: {0}")]
    Parameters(String),

    #[error("multiple violations: {0:?}")]
    Violations(Vec<String>),
}
