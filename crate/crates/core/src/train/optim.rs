use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::nn::ParameterStore;

pub const ADAGRAD_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
}

/// `theta <- theta - lr * g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], learning_rate: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(shape(format!(
            "sgd: {} parameters vs {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= learning_rate * g;
    }
    Ok(())
}

/// `G <- G + g^2; theta <- theta - lr * g / sqrt(G + eps)`.
pub fn adagrad_step(
    params: &mut [f64],
    grads: &[f64],
    accumulators: &mut [f64],
    learning_rate: f64,
    epsilon: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != accumulators.len() {
        return Err(shape(format!(
            "adagrad: {} parameters, {} gradients, {} accumulators",
            params.len(),
            grads.len(),
            accumulators.len()
        )));
    }
    for ((p, g), acc) in params.iter_mut().zip(grads).zip(accumulators.iter_mut()) {
        *acc += g * g;
        *p -= learning_rate * g / (*acc + epsilon).sqrt();
    }
    Ok(())
}

/// Optimizer configuration plus its running state.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub epsilon: f64,
    pub steps: u64,
    /// Squared-gradient sums, present for AdaGrad only.
    pub accumulators: Option<ParameterStore>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ParameterStore) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate {learning_rate} must be positive")));
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            epsilon: ADAGRAD_EPSILON,
            steps: 0,
            accumulators: match kind {
                OptimizerKind::Sgd => None,
                OptimizerKind::Adagrad => Some(params.zeros_like()),
            },
        })
    }

    pub fn apply(&mut self, params: &mut ParameterStore, grads: &ParameterStore) -> Result<()> {
        if params.tensors().count() != grads.tensors().count() {
            return Err(shape("parameter and gradient stores differ"));
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.tensors_mut().zip(grads.tensors()) {
                    sgd_step(p.data_mut(), g.data(), self.learning_rate)?;
                }
            }
            OptimizerKind::Adagrad => {
                let acc = self
                    .accumulators
                    .as_mut()
                    .ok_or_else(|| shape("adagrad state has no accumulators"))?;
                for ((p, g), a) in params
                    .tensors_mut()
                    .zip(grads.tensors())
                    .zip(acc.tensors_mut())
                {
                    adagrad_step(
                        p.data_mut(),
                        g.data(),
                        a.data_mut(),
                        self.learning_rate,
                        self.epsilon,
                    )?;
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}
