use serde::{Deserialize, Serialize};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment estimates for a list of parameter tensors.
#[derive(Clone, Debug)]
pub struct AdamState<S> {
    pub config: AdamConfig,
    first_moment: Vec<Tensor<S>>,
    second_moment: Vec<Tensor<S>>,
    step: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(params: &[Tensor<S>], config: AdamConfig) -> Self {
        let zeros = |p: &Tensor<S>| Tensor::zeros(p.shape());
        Self {
            config,
            first_moment: params.iter().map(zeros).collect(),
            second_moment: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }
}

/// One bias-corrected Adam update. `state.step_count()` increases by one.
pub fn adam_step<S: Real>(
    params: &mut [Tensor<S>],
    grads: &[Tensor<S>],
    state: &mut AdamState<S>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::Shape {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len(), state.first_moment.len()],
        });
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.first_moment) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Shape {
                op: "adam_step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }

    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let b1 = S::of(cfg.beta1);
    let b2 = S::of(cfg.beta2);
    let one = S::one();
    let bias1 = S::of(1.0 - cfg.beta1.powi(t));
    let bias2 = S::of(1.0 - cfg.beta2.powi(t));
    let lr = S::of(cfg.learning_rate);
    let eps = S::of(cfg.epsilon);

    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / bias1;
            let v_hat = *vv / bias2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
