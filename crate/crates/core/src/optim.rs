//! First-order optimizers over the flat parameter buffer.

use serde::{Deserialize, Serialize};

use crate::policy::PolicyParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment buffers for Adam; unused by plain SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub adam: AdamConfig,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, n: usize) -> Self {
        Self {
            kind,
            adam: AdamConfig::default(),
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    /// Moves `params` along `direction` (ascent if the caller passes the
    /// gradient of an objective to maximize, descent if it passes the
    /// negated gradient).
    pub fn apply(&mut self, params: &mut PolicyParams, direction: &PolicyParams, lr: f64) {
        self.step += 1;
        let p = params.as_mut_slice();
        let g = direction.as_slice();
        match self.kind {
            OptimizerKind::Sgd => {
                for (pi, gi) in p.iter_mut().zip(g) {
                    *pi += lr * gi;
                }
            }
            OptimizerKind::Adam => {
                let AdamConfig { beta1, beta2, eps } = self.adam;
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((pi, gi), m), v) in p.iter_mut().zip(g).zip(&mut self.m).zip(&mut self.v) {
                    *m = beta1 * *m + (1.0 - beta1) * gi;
                    *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                    let mhat = *m / c1;
                    let vhat = *v / c2;
                    *pi += lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}
