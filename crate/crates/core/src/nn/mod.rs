//! A minimal tensor and layer engine covering exactly the layers the two
//! classifiers use, trained with Adam.

mod adam;
pub mod checkpoint;
mod network;
pub mod ops;
mod real;
mod spec;
mod tensor;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use network::{Cache, Gradients, Network, GRAD_CHUNK};
pub use real::{matmul, matmul_nt, matmul_tn, Real};
pub use spec::{build_cnn_model, build_fc_model, LayerSpec, ModelKind, ModelSpec, KERNEL, POOL};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        context: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("label {label} out of range for {classes} outputs")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward called with a cache from an inference-mode forward pass")]
    MissingCache,
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}
