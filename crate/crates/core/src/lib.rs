//! Simultaneous learning: a classifier head spanning a target group and an
//! auxiliary group of classes, trained with a weighted group cross-entropy
//! plus an inter-group penalty, then evaluated on the target outputs only.

pub mod data;
pub mod error;
pub mod experiment;
pub mod interpret;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use loss::{Group, GroupLayout, Hyperparameters, LabelVector};
pub use nn::{Model, ModelSpec, ParameterStore};
pub use tensor::Tensor;
