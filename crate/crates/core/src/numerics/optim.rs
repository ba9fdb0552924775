use serde::{Deserialize, Serialize};

use super::params::AdamState;
use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Sgd, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn adam(learning_rate: f64) -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, ..Self::sgd(learning_rate) }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Apply one update from the accumulated gradients, then zero them.
///
/// A non-finite gradient anywhere aborts before any value is touched.
pub fn optimizer_step(store: &mut ParamStore, config: &OptimizerConfig) -> Result<()> {
    config.validate()?;
    if store.iter().any(|(_, e)| !e.grad.is_finite()) {
        return Err(Error::NonFinite { op: "optimizer_step" });
    }
    let lr = config.learning_rate;
    for (_, entry) in store.iter_mut() {
        match config.kind {
            OptimizerKind::Sgd => {
                for (p, g) in entry.value.data_mut().iter_mut().zip(entry.grad.data()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let shape = entry.value.shape().to_vec();
                let n = entry.value.len();
                let state = entry.adam.get_or_insert_with(|| AdamState {
                    m: Tensor::new(shape.clone(), vec![0.0; n]).expect("shape from value"),
                    v: Tensor::new(shape, vec![0.0; n]).expect("shape from value"),
                    step: 0,
                });
                state.step += 1;
                let t = state.step as i32;
                let c1 = 1.0 - config.beta1.powi(t);
                let c2 = 1.0 - config.beta2.powi(t);
                let grads = entry.grad.data();
                let (m, v) = (state.m.data_mut(), state.v.data_mut());
                for (i, p) in entry.value.data_mut().iter_mut().enumerate() {
                    let g = grads[i];
                    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
                    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
                }
            }
        }
        if !entry.value.is_finite() {
            return Err(Error::NonFinite { op: "optimizer_step" });
        }
    }
    store.zero_grad();
    Ok(())
}
