//! Dense-tensor network engine: layer kernels, the layered model with its
//! parameter store, and the multi-group head surgery.

pub mod init;
pub mod layers;
mod model;

pub use init::{glorot_limit, glorot_uniform};
pub use layers::ConvGeometry;
pub use model::{
    Architecture, ForwardPass, Gradients, Layer, LayerParams, Model, ModelSpec, ParameterStore,
};
