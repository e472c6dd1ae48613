//! Minimal dense-network engine: layers, batched forward/backward, Adam,
//! initialization and checkpoints.

mod adam;
pub mod checkpoint;
mod fastexp;
mod gemm;
mod layer;
mod mlp;
mod params;
mod tape;

pub use adam::{AdamHyper, AdamState};
pub use layer::{softmax, Activation, DenseLayer};
pub use mlp::{Mlp, MlpInput, MlpTrace};
pub use params::{init_params, Architecture, NetworkParams};
pub use tape::{GradientTape, LayerGrad};

