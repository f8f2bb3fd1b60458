//! Minimal CPU deep-learning toolkit: dense tensors, a reverse-mode autograd
//! tape, convolution/pooling kernels, declarative layer stacks, the Adam
//! optimizer and a flat weight-file format.
//!
//! Everything is single-threaded and deterministic: the same seeds and inputs
//! produce bit-identical parameters on one platform.

mod gemm;
pub mod graph;
pub mod io;
mod kernels;
pub mod layers;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use graph::{Grads, Graph, Var};
pub use io::Container;
pub use layers::{ForwardCtx, Init, LayerSpec, Sequential};
pub use optim::{Adam, AdamConfig};
pub use params::{Bound, ParamId, ParamStore};
pub use rng::{derive_seed, stream, StreamRng};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("tensor `{0}` missing from weights")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("malformed weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
