use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    kind: OptimizerKind,
    lr: f64,
    first: Option<ParamVector>,
    second: Option<ParamVector>,
    steps: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            first: None,
            second: None,
            steps: 0,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Descends along `gradient`: returns the updated parameters.
    pub fn step(&mut self, params: &ParamVector, gradient: &ParamVector) -> Result<ParamVector> {
        params.check_layout(gradient)?;
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                let values = params
                    .values()
                    .iter()
                    .zip(gradient.values())
                    .map(|(p, g)| p - self.lr * g)
                    .collect();
                params.with_values(values)
            }
            OptimizerKind::Adam => {
                let m = self.first.get_or_insert_with(|| params.zeros_like());
                let v = self.second.get_or_insert_with(|| params.zeros_like());
                if !m.same_layout(params) {
                    return Err(Error::LayoutMismatch(
                        "optimizer moments belong to another layout".into(),
                    ));
                }
                let t = self.steps as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let mut out = params.values().to_vec();
                for (((p, g), mi), vi) in out
                    .iter_mut()
                    .zip(gradient.values())
                    .zip(m.values_mut())
                    .zip(v.values_mut())
                {
                    *mi = ADAM_BETA1 * *mi + (1.0 - ADAM_BETA1) * g;
                    *vi = ADAM_BETA2 * *vi + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *mi / c1;
                    let v_hat = *vi / c2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
                params.with_values(out)
            }
        }
    }
}

/// One optimizer update of `params` along `gradient`.
pub fn optimizer_step(state: &mut OptimizerState, params: &ParamVector, gradient: &ParamVector) -> Result<ParamVector> {
    state.step(params, gradient)
}
