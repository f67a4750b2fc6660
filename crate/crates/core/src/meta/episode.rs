//! One XG-Reptile episode and its pieces.
//!
//! An episode copies `phi_1 = theta`, takes `K` inner optimizer steps on
//! support batches to reach `phi_K`, evaluates the target-language loss at
//! `phi_K`, and hands the outer optimizer the gradient
//! `G = -[(phi_K - phi_1) - lambda * grad L_T(phi_K)]`.
//! With `lambda = 0` this is a Reptile step; with `K = 1` and SGD on both
//! sides it is the first-order DG-FMAML update.

use serde::{Deserialize, Serialize};

use super::optim::{OptimizerKind, OptimizerState};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::params::{param_axpy, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EpisodeConfig {
    /// Inner-loop steps per episode.
    pub k: usize,
    /// Inner learning rate (alpha).
    pub inner_lr: f64,
    /// Outer learning rate (beta).
    pub outer_lr: f64,
    /// Target-step weight (lambda); `None` means `inner_lr`.
    pub target_weight: Option<f64>,
    pub inner_optimizer: OptimizerKind,
    pub outer_optimizer: OptimizerKind,
    pub batch_size: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            k: 10,
            inner_lr: 1e-4,
            outer_lr: 1e-3,
            target_weight: None,
            inner_optimizer: OptimizerKind::Sgd,
            outer_optimizer: OptimizerKind::Adam,
            batch_size: 10,
        }
    }
}

impl EpisodeConfig {
    pub fn lambda(&self) -> f64 {
        self.target_weight.unwrap_or(self.inner_lr)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(self.inner_lr > 0.0 && self.outer_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.lambda() >= 0.0) {
            return Err(Error::Config("target weight must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn inner_state(&self) -> OptimizerState {
        OptimizerState::new(self.inner_optimizer, self.inner_lr)
    }

    pub fn outer_state(&self) -> OptimizerState {
        OptimizerState::new(self.outer_optimizer, self.outer_lr)
    }
}

#[derive(Debug, Clone)]
pub struct InnerLoop {
    pub phi_k: ParamVector,
    /// Raw gradient `g_k` at `phi_k` before the k-th optimizer step.
    pub step_gradients: Vec<ParamVector>,
    pub losses: Vec<f64>,
}

/// `K` optimizer steps from `phi_1`, one per support batch, with a fresh
/// inner optimizer.
pub fn inner_loop<M: Model>(
    model: &M,
    phi_1: &ParamVector,
    support_batches: &[Vec<M::Item>],
    config: &EpisodeConfig,
) -> Result<InnerLoop> {
    if support_batches.len() != config.k {
        return Err(Error::Config(format!(
            "inner loop needs exactly K = {} support batches, got {}",
            config.k,
            support_batches.len()
        )));
    }
    let mut state = config.inner_state();
    let mut phi = phi_1.clone();
    let mut step_gradients = Vec::with_capacity(config.k);
    let mut losses = Vec::with_capacity(config.k);
    for batch in support_batches {
        let (loss, grad) = model.batch_loss(&phi, batch)?;
        phi = state.step(&phi, &grad)?;
        step_gradients.push(grad);
        losses.push(loss);
    }
    Ok(InnerLoop {
        phi_k: phi,
        step_gradients,
        losses,
    })
}

/// `phi_K - phi_1`.
pub fn macro_gradient(phi_1: &ParamVector, phi_k: &ParamVector) -> Result<ParamVector> {
    phi_k.sub(phi_1)
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub theta: ParamVector,
    pub macro_gradient: ParamVector,
    /// Gradient passed to the outer optimizer.
    pub outer_gradient: ParamVector,
    pub support_losses: Vec<f64>,
    pub target_loss: Option<f64>,
}

/// Outer-optimizer gradient `-(macro - lambda * target_grad)`.
pub fn outer_gradient(
    macro_grad: &ParamVector,
    lambda: f64,
    target_grad: &ParamVector,
) -> Result<ParamVector> {
    let descent = if lambda == 0.0 {
        macro_grad.clone()
    } else {
        param_axpy(-lambda, target_grad, macro_grad)?
    };
    Ok(descent.scaled(-1.0))
}

/// One XG-Reptile episode from `theta`.
pub fn xg_reptile_episode<M: Model>(
    model: &M,
    theta: &ParamVector,
    support_batches: &[Vec<M::Item>],
    target_batch: &[M::Item],
    config: &EpisodeConfig,
    outer: &mut OptimizerState,
) -> Result<EpisodeOutcome> {
    if target_batch.is_empty() {
        return Err(Error::Empty("target batch".into()));
    }
    let phi_1 = theta.clone();
    let inner = inner_loop(model, &phi_1, support_batches, config)?;
    let macro_grad = macro_gradient(&phi_1, &inner.phi_k)?;
    let (target_loss, target_grad) = model.batch_loss(&inner.phi_k, target_batch)?;
    let outer_gradient = outer_gradient(&macro_grad, config.lambda(), &target_grad)?;
    let theta = outer.step(theta, &outer_gradient)?;
    Ok(EpisodeOutcome {
        theta,
        macro_gradient: macro_grad,
        outer_gradient,
        support_losses: inner.losses,
        target_loss: Some(target_loss),
    })
}

/// One plain Reptile episode: the outer gradient is `-(phi_K - phi_1)`.
pub fn reptile_episode<M: Model>(
    model: &M,
    theta: &ParamVector,
    support_batches: &[Vec<M::Item>],
    config: &EpisodeConfig,
    outer: &mut OptimizerState,
) -> Result<EpisodeOutcome> {
    let phi_1 = theta.clone();
    let inner = inner_loop(model, &phi_1, support_batches, config)?;
    let macro_grad = macro_gradient(&phi_1, &inner.phi_k)?;
    let outer_gradient = macro_grad.scaled(-1.0);
    let theta = outer.step(theta, &outer_gradient)?;
    Ok(EpisodeOutcome {
        theta,
        macro_gradient: macro_grad,
        outer_gradient,
        support_losses: inner.losses,
        target_loss: None,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::params::Layout;

    /// `loss(theta; c) = 0.5 * sum_i a_i (theta_i - c_i)^2`, one item per centre.
    struct Quadratic {
        a: Vec<f64>,
    }

    impl Model for Quadratic {
        type Item = Vec<f64>;

        fn batch_loss(&self, params: &ParamVector, batch: &[Vec<f64>]) -> Result<(f64, ParamVector)> {
            let n = batch.len() as f64;
            let mut loss = 0.0;
            let mut grad = vec![0.0; self.a.len()];
            for c in batch {
                for i in 0..self.a.len() {
                    let d = params.values()[i] - c[i];
                    loss += 0.5 * self.a[i] * d * d / n;
                    grad[i] += self.a[i] * d / n;
                }
            }
            Ok((loss, params.with_values(grad)?))
        }
    }

    fn pv(values: Vec<f64>) -> ParamVector {
        let mut l = Layout::new();
        l.push("theta", &[values.len()]);
        ParamVector::new(Arc::new(l), values).unwrap()
    }

    fn sgd_config(k: usize, alpha: f64, beta: f64) -> EpisodeConfig {
        EpisodeConfig {
            k,
            inner_lr: alpha,
            outer_lr: beta,
            target_weight: None,
            inner_optimizer: OptimizerKind::Sgd,
            outer_optimizer: OptimizerKind::Sgd,
            batch_size: 1,
        }
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let model = Quadratic { a: vec![2.0, 0.5] };
        let theta = pv(vec![1.0, -1.0]);
        let support = vec![vec![0.0, 0.0]];
        let target = vec![vec![3.0, 1.0]];
        let (alpha, beta) = (0.1, 0.5);
        let cfg = sgd_config(1, alpha, beta);
        let mut outer = cfg.outer_state();
        let out = xg_reptile_episode(&model, &theta, &[support], &target, &cfg, &mut outer).unwrap();

        // g_S(theta) = a * theta; phi = theta - alpha g_S; g_T(phi) = a * (phi - c_T)
        let mut expect = Vec::new();
        for i in 0..2 {
            let a = model.a[i];
            let th = theta.values()[i];
            let gs = a * th;
            let phi = th - alpha * gs;
            let gt = a * (phi - target[0][i]);
            expect.push(th + beta * (-alpha * gs - alpha * gt));
        }
        for (x, y) in out.theta.values().iter().zip(&expect) {
            assert!((x - y).abs() < 1e-15, "{x} vs {y}");
        }
    }

    #[test]
    fn zero_gradients_leave_theta_fixed() {
        let model = Quadratic { a: vec![1.0, 3.0] };
        let theta = pv(vec![0.25, -0.5]);
        let centre = theta.values().to_vec();
        let mut cfg = sgd_config(3, 0.1, 0.1);
        cfg.outer_optimizer = OptimizerKind::Adam;
        let mut outer = cfg.outer_state();
        let support = vec![centre.clone(); 3].into_iter().map(|c| vec![c]).collect::<Vec<_>>();
        let out = xg_reptile_episode(&model, &theta, &support, &[centre], &cfg, &mut outer).unwrap();
        assert_eq!(out.theta, theta);
        assert!(out.macro_gradient.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn macro_gradient_telescopes() {
        let model = Quadratic { a: vec![1.5, 0.7, 2.0] };
        let theta = pv(vec![0.3, 0.1, -0.4]);
        let support: Vec<Vec<Vec<f64>>> = (0..5)
            .map(|k| vec![vec![k as f64 * 0.1, -0.2, 0.3 * k as f64]])
            .collect();
        let cfg = sgd_config(5, 0.05, 1.0);
        let inner = inner_loop(&model, &theta, &support, &cfg).unwrap();
        let m = macro_gradient(&theta, &inner.phi_k).unwrap();
        let mut sum = theta.zeros_like();
        for g in &inner.step_gradients {
            sum.axpy_assign(-cfg.inner_lr, g).unwrap();
        }
        for (x, y) in m.values().iter().zip(sum.values()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_lambda_is_reptile_bit_for_bit() {
        let model = Quadratic { a: vec![1.0, 2.0] };
        let theta = pv(vec![1.0, 2.0]);
        let support: Vec<Vec<Vec<f64>>> = (0..4).map(|k| vec![vec![k as f64, 1.0]]).collect();
        let mut cfg = sgd_config(4, 0.1, 0.01);
        cfg.outer_optimizer = OptimizerKind::Adam;
        cfg.target_weight = Some(0.0);
        let (mut o1, mut o2) = (cfg.outer_state(), cfg.outer_state());
        let mut t1 = theta.clone();
        let mut t2 = theta;
        for _ in 0..3 {
            t1 = xg_reptile_episode(&model, &t1, &support, &[vec![9.0, 9.0]], &cfg, &mut o1)
                .unwrap()
                .theta;
            t2 = reptile_episode(&model, &t2, &support, &cfg, &mut o2).unwrap().theta;
        }
        assert_eq!(t1.values(), t2.values());
    }

    #[test]
    fn wrong_batch_count_is_rejected() {
        let model = Quadratic { a: vec![1.0] };
        let cfg = sgd_config(3, 0.1, 0.1);
        let err = inner_loop(&model, &pv(vec![0.0]), &[vec![vec![0.0]]], &cfg);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn default_lambda_follows_inner_rate() {
        let cfg = EpisodeConfig::default();
        assert_eq!(cfg.lambda(), cfg.inner_lr);
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.batch_size, 10);
    }
}
