//! Exact-gradient testbed for the inner-loop Taylor expansions.
//!
//! [`PolyTask`] has per-batch losses
//! `loss_k(theta) = 0.5 theta' A_k theta + b_k' theta + (c/3) sum theta_i^3`
//! with closed-form gradients and Hessians. With `c = 0` the Hessian is
//! constant and first-order expansions around `phi_1` are exact; with
//! `c != 0` they carry an `O(alpha^2)` remainder.
//!
//! Throughout, step `k` of an inner loop of length `K` uses batch `k - 1`,
//! and `g-bar_k`, `H-bar_k` denote batch `k`'s gradient and Hessian at the
//! starting point `phi_1 = theta0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{inner_loop, outer_gradient, EpisodeConfig, OptimizerKind};
use crate::models::Model;
use crate::params::{Layout, ParamVector};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq)]
pub struct PolyTask {
    dim: usize,
    /// Row-major `dim x dim` matrices.
    matrices: Vec<Vec<f64>>,
    offsets: Vec<Vec<f64>>,
    cubic: f64,
    layout: Arc<Layout>,
}

fn theta_layout(dim: usize) -> Arc<Layout> {
    let mut l = Layout::new();
    l.push("theta", &[dim]);
    Arc::new(l)
}

fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| m[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn scale(a: f64, v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| a * x).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cholesky succeeds iff the symmetric matrix is positive definite.
fn is_positive_definite(m: &[f64], d: usize) -> bool {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            if i == j {
                let v = m[i * d + i] - s;
                if v <= 0.0 {
                    return false;
                }
                l[i * d + i] = v.sqrt();
            } else {
                l[i * d + j] = (m[i * d + j] - s) / l[j * d + j];
            }
        }
    }
    true
}

impl PolyTask {
    pub fn new(matrices: Vec<Vec<f64>>, offsets: Vec<Vec<f64>>, cubic: f64) -> Result<Self> {
        if matrices.is_empty() || matrices.len() != offsets.len() {
            return Err(Error::InvalidTensor(format!(
                "{} matrices and {} offsets",
                matrices.len(),
                offsets.len()
            )));
        }
        let dim = offsets[0].len();
        if dim == 0 {
            return Err(Error::InvalidTensor("dimension must be positive".into()));
        }
        for (k, (m, b)) in matrices.iter().zip(&offsets).enumerate() {
            if m.len() != dim * dim || b.len() != dim {
                return Err(Error::InvalidTensor(format!("batch {k} has the wrong dimension")));
            }
            for i in 0..dim {
                for j in 0..i {
                    if m[i * dim + j] != m[j * dim + i] {
                        return Err(Error::InvalidTensor(format!("A_{k} is not symmetric")));
                    }
                }
            }
            if !is_positive_definite(m, dim) {
                return Err(Error::InvalidTensor(format!("A_{k} is not positive definite")));
            }
        }
        if !cubic.is_finite() {
            return Err(Error::InvalidTensor("cubic coefficient must be finite".into()));
        }
        Ok(Self {
            dim,
            matrices,
            offsets,
            cubic,
            layout: theta_layout(dim),
        })
    }

    /// `batches` random tasks: `A_k = Q diag(lambda) Q'` with `Q` random
    /// orthogonal and `lambda` uniform in `[0.5, 2]`, `b_k` standard normal.
    pub fn random(dim: usize, batches: usize, cubic: f64, seed: u64) -> Self {
        let mut rng = Stream::new(seed, "poly-task");
        let mut matrices = Vec::with_capacity(batches);
        let mut offsets = Vec::with_capacity(batches);
        for _ in 0..batches {
            let q = random_orthogonal(dim, &mut rng);
            let eig: Vec<f64> = (0..dim).map(|_| rng.uniform(0.5, 2.0)).collect();
            let mut a = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..=i {
                    let v: f64 = (0..dim).map(|k| q[i * dim + k] * eig[k] * q[j * dim + k]).sum();
                    a[i * dim + j] = v;
                    a[j * dim + i] = v;
                }
            }
            matrices.push(a);
            offsets.push((0..dim).map(|_| rng.normal()).collect());
        }
        Self::new(matrices, offsets, cubic).expect("random task is symmetric positive definite")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_batches(&self) -> usize {
        self.matrices.len()
    }

    pub fn cubic(&self) -> f64 {
        self.cubic
    }

    pub fn matrix(&self, k: usize) -> &[f64] {
        &self.matrices[k]
    }

    pub fn offset(&self, k: usize) -> &[f64] {
        &self.offsets[k]
    }

    pub fn params(&self, theta: &[f64]) -> Result<ParamVector> {
        ParamVector::new(self.layout.clone(), theta.to_vec())
    }

    fn check(&self, k: usize, theta: &[f64]) -> Result<()> {
        if k >= self.num_batches() {
            return Err(Error::Config(format!(
                "batch {k} out of range for {} batches",
                self.num_batches()
            )));
        }
        if theta.len() != self.dim {
            return Err(Error::ShapeMismatch {
                op: "poly_task",
                lhs: vec![self.dim],
                rhs: vec![theta.len()],
            });
        }
        Ok(())
    }

    pub fn loss(&self, k: usize, theta: &[f64]) -> Result<f64> {
        self.check(k, theta)?;
        let at = matvec(&self.matrices[k], theta);
        let quad: f64 = 0.5 * theta.iter().zip(&at).map(|(x, y)| x * y).sum::<f64>();
        let lin: f64 = self.offsets[k].iter().zip(theta).map(|(b, x)| b * x).sum();
        let cub: f64 = self.cubic / 3.0 * theta.iter().map(|x| x * x * x).sum::<f64>();
        Ok(quad + lin + cub)
    }
}

fn random_orthogonal(d: usize, rng: &mut Stream) -> Vec<f64> {
    // Modified Gram-Schmidt on the columns of a Gaussian matrix.
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            for (vi, ci) in v.iter_mut().zip(c) {
                *vi -= p * ci;
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            cols.push(scale(1.0 / n, &v));
        }
    }
    let mut q = vec![0.0; d * d];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..d {
            q[i * d + j] = c[i];
        }
    }
    q
}

/// `A_k theta + b_k + c theta^2` (elementwise square).
pub fn exact_grad(task: &PolyTask, k: usize, theta: &[f64]) -> Result<Vec<f64>> {
    task.check(k, theta)?;
    let at = matvec(&task.matrices[k], theta);
    Ok(at
        .iter()
        .zip(&task.offsets[k])
        .zip(theta)
        .map(|((a, b), t)| a + b + task.cubic * t * t)
        .collect())
}

/// `A_k + 2c diag(theta)`, row-major.
pub fn exact_hessian(task: &PolyTask, k: usize, theta: &[f64]) -> Result<Vec<f64>> {
    task.check(k, theta)?;
    let d = task.dim;
    let mut h = task.matrices[k].clone();
    for i in 0..d {
        h[i * d + i] += 2.0 * task.cubic * theta[i];
    }
    Ok(h)
}

impl Model for PolyTask {
    /// Batch index.
    type Item = usize;

    fn batch_loss(&self, params: &ParamVector, batch: &[usize]) -> Result<(f64, ParamVector)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch".into()));
        }
        let theta = params.values();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.dim];
        for &k in batch {
            loss += self.loss(k, theta)? / n;
            for (g, v) in grad.iter_mut().zip(exact_grad(self, k, theta)?) {
                *g += v / n;
            }
        }
        Ok((loss, params.with_values(grad)?))
    }
}

fn sgd_config(k: usize, alpha: f64) -> EpisodeConfig {
    EpisodeConfig {
        k,
        inner_lr: alpha,
        target_weight: Some(alpha),
        inner_optimizer: OptimizerKind::Sgd,
        outer_optimizer: OptimizerKind::Sgd,
        ..EpisodeConfig::default()
    }
}

fn support_batches(task: &PolyTask, k: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || k > task.num_batches() {
        return Err(Error::Config(format!(
            "K = {k} needs between 1 and {} batches",
            task.num_batches()
        )));
    }
    Ok((0..k).map(|i| vec![i]).collect())
}

/// SGD iterates `theta <- (I - alpha A_k) theta - alpha b_k` for batches
/// `0..K`; returns the `K` iterates after each step. Requires `c = 0`.
pub fn closed_form_sgd_trajectory(
    task: &PolyTask,
    alpha: f64,
    k: usize,
    theta0: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if task.cubic != 0.0 {
        return Err(Error::Config("closed-form trajectory needs c = 0".into()));
    }
    support_batches(task, k)?;
    task.check(0, theta0)?;
    let d = task.dim;
    let mut theta = theta0.to_vec();
    let mut out = Vec::with_capacity(k);
    for step in 0..k {
        let a = &task.matrices[step];
        let b = &task.offsets[step];
        theta = (0..d)
            .map(|i| {
                let mut v = 0.0;
                for j in 0..d {
                    let m = if i == j { 1.0 } else { 0.0 } - alpha * a[i * d + j];
                    v += m * theta[j];
                }
                v - alpha * b[i]
            })
            .collect();
        out.push(theta.clone());
    }
    Ok(out)
}

/// Per-step residual norms of the inner-loop gradient expansions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorResidual {
    /// `|| g_k - [g-bar_k + H-bar_k (phi_k - phi_1)] ||`; zero for `c = 0`.
    pub expansion: Vec<f64>,
    /// `|| g_k - [g-bar_k - alpha H-bar_k sum_{j<k} g-bar_j] ||`.
    pub truncated: Vec<f64>,
    /// Deviation of the truncated residual vector from its quadratic
    /// remainder `-alpha H-bar_k sum_{j<k} (g_j - g-bar_j)`; zero for `c = 0`.
    pub remainder: Vec<f64>,
}

/// Expansion residuals along an SGD inner loop of `K` steps from `theta0`.
pub fn taylor_residual(task: &PolyTask, alpha: f64, k: usize, theta0: &[f64]) -> Result<TaylorResidual> {
    let batches = support_batches(task, k)?;
    let inner = inner_loop(task, &task.params(theta0)?, &batches, &sgd_config(k, alpha))?;
    let mut phi = theta0.to_vec();
    let mut bar_sum = vec![0.0; task.dim];
    let mut actual_minus_bar = vec![0.0; task.dim];
    let mut out = TaylorResidual {
        expansion: Vec::with_capacity(k),
        truncated: Vec::with_capacity(k),
        remainder: Vec::with_capacity(k),
    };
    for (step, g) in inner.step_gradients.iter().enumerate() {
        let g = g.values();
        let g_bar = exact_grad(task, step, theta0)?;
        let h_bar = exact_hessian(task, step, theta0)?;

        let first = add(&g_bar, &matvec(&h_bar, &sub(&phi, theta0)));
        out.expansion.push(norm(&sub(g, &first)));

        let trunc = sub(&g_bar, &scale(alpha, &matvec(&h_bar, &bar_sum)));
        let r = sub(g, &trunc);
        out.truncated.push(norm(&r));
        let predicted = scale(-alpha, &matvec(&h_bar, &actual_minus_bar));
        out.remainder.push(norm(&sub(&r, &predicted)));

        bar_sum = add(&bar_sum, &g_bar);
        actual_minus_bar = add(&actual_minus_bar, &sub(g, &g_bar));
        phi = sub(&phi, &scale(alpha, g));
    }
    Ok(out)
}

/// `|| g_T(phi_K) - [g-bar_T + H_T (phi_K - theta0)] ||` after an SGD inner
/// loop over batches `0..K`, with `H_T` taken at `theta0`.
pub fn target_expansion_check(
    task: &PolyTask,
    target: usize,
    alpha: f64,
    k: usize,
    theta0: &[f64],
) -> Result<f64> {
    let batches = support_batches(task, k)?;
    let inner = inner_loop(task, &task.params(theta0)?, &batches, &sgd_config(k, alpha))?;
    let phi_k = inner.phi_k.values();
    let g_t = exact_grad(task, target, phi_k)?;
    let g_bar = exact_grad(task, target, theta0)?;
    let h_t = exact_hessian(task, target, theta0)?;
    let predicted = add(&g_bar, &matvec(&h_t, &sub(phi_k, theta0)));
    Ok(norm(&sub(&g_t, &predicted)))
}

/// Components of the `K = 2` total gradient `g_1 + g_2 + g_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
    pub gt: Vec<f64>,
    /// `H-bar_2 g-bar_1`.
    pub h2_g1: Vec<f64>,
    /// `H-bar_T (g-bar_1 + g-bar_2)`.
    pub ht_g12: Vec<f64>,
    /// Episode total gradient: the outer gradient divided by `alpha` with
    /// `lambda = alpha`.
    pub assembled: Vec<f64>,
    /// `g-bar_1 + g-bar_2 + g-bar_T - alpha (h2_g1 + ht_g12)`.
    pub reassembled: Vec<f64>,
    /// `|| assembled - reassembled ||`, `O(alpha^2)`.
    pub residual: f64,
    /// Deviation of `assembled - reassembled` from
    /// `alpha^2 H-bar_T H-bar_2 g-bar_1`; zero for `c = 0`.
    pub remainder: f64,
}

pub fn total_gradient_decomposition(
    task: &PolyTask,
    alpha: f64,
    theta0: &[f64],
    target: usize,
) -> Result<Decomposition> {
    let batches = support_batches(task, 2)?;
    let cfg = sgd_config(2, alpha);
    let phi_1 = task.params(theta0)?;
    let inner = inner_loop(task, &phi_1, &batches, &cfg)?;
    let macro_grad = inner.phi_k.sub(&phi_1)?;
    let (_, target_grad) = task.batch_loss(&inner.phi_k, &[target])?;
    let outer = outer_gradient(&macro_grad, cfg.lambda(), &target_grad)?;
    let assembled = scale(1.0 / alpha, outer.values());

    let g1 = exact_grad(task, 0, theta0)?;
    let g2 = exact_grad(task, 1, theta0)?;
    let gt = exact_grad(task, target, theta0)?;
    let h2 = exact_hessian(task, 1, theta0)?;
    let ht = exact_hessian(task, target, theta0)?;
    let h2_g1 = matvec(&h2, &g1);
    let ht_g12 = matvec(&ht, &add(&g1, &g2));
    let reassembled = sub(&add(&add(&g1, &g2), &gt), &scale(alpha, &add(&h2_g1, &ht_g12)));
    let diff = sub(&assembled, &reassembled);
    let predicted = scale(alpha * alpha, &matvec(&ht, &h2_g1));
    Ok(Decomposition {
        residual: norm(&diff),
        remainder: norm(&sub(&diff, &predicted)),
        g1,
        g2,
        gt,
        h2_g1,
        ht_g12,
        assembled,
        reassembled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub dims: Vec<usize>,
    pub ks: Vec<usize>,
    /// Seeds for the exactness checks.
    pub seeds: u64,
    /// Seeds averaged by the step-halving checks.
    pub ratio_seeds: u64,
    pub alpha: f64,
    /// Cubic coefficient for the step-halving checks.
    pub cubic: f64,
    pub ratio_dim: usize,
    pub ratio_k: usize,
    pub tolerance: f64,
    pub ratio_range: (f64, f64),
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            dims: vec![2, 5, 20],
            ks: vec![1, 2, 5, 10],
            seeds: 50,
            ratio_seeds: 20,
            alpha: 0.01,
            cubic: 0.5,
            ratio_dim: 5,
            ratio_k: 5,
            tolerance: 1e-12,
            ratio_range: (3.5, 4.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub identity: String,
    pub dim: usize,
    pub k: usize,
    pub alpha: f64,
    pub cubic: f64,
    pub seeds: u64,
    /// Worst residual, or the mean ratio for step-halving checks.
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn random_theta(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = Stream::new(seed, "theta0");
    (0..dim).map(|_| rng.normal()).collect()
}

/// Runs the exactness checks at `c = 0` and the step-halving checks at
/// `c = config.cubic`.
pub fn verify_gradients(config: &VerifyConfig) -> Result<VerificationReport> {
    if config.seeds == 0 || config.ratio_seeds == 0 || config.dims.is_empty() || config.ks.is_empty() {
        return Err(Error::Config("verification needs dims, ks and seeds".into()));
    }
    let mut checks = Vec::new();
    let alpha = config.alpha;
    let tol = config.tolerance;
    let mut exact = |identity: &str, dim: usize, k: usize, value: f64| {
        checks.push(CheckRecord {
            identity: identity.to_string(),
            dim,
            k,
            alpha,
            cubic: 0.0,
            seeds: config.seeds,
            value,
            lower: None,
            upper: tol,
            passed: value <= tol,
        });
    };

    for &dim in &config.dims {
        for &k in &config.ks {
            let mut worst = [0.0f64; 6];
            for seed in 0..config.seeds {
                let task = PolyTask::random(dim, k + 1, 0.0, seed);
                let theta0 = random_theta(dim, seed);
                let batches = support_batches(&task, k)?;
                let inner = inner_loop(&task, &task.params(&theta0)?, &batches, &sgd_config(k, alpha))?;
                let closed = closed_form_sgd_trajectory(&task, alpha, k, &theta0)?;
                worst[0] = worst[0].max(norm(&sub(inner.phi_k.values(), &closed[k - 1])));

                let mut tele = inner.phi_k.sub(&task.params(&theta0)?)?;
                for g in &inner.step_gradients {
                    tele.axpy_assign(alpha, g)?;
                }
                worst[1] = worst[1].max(tele.norm_inf());

                let tr = taylor_residual(&task, alpha, k, &theta0)?;
                let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
                worst[2] = worst[2].max(max(&tr.expansion));
                worst[3] = worst[3].max(max(&tr.truncated[..k.min(2)]));
                worst[4] = worst[4].max(max(&tr.remainder));
                worst[5] = worst[5].max(target_expansion_check(&task, k, alpha, k, &theta0)?);
            }
            exact("inner_loop_matches_closed_form", dim, k, worst[0]);
            exact("macro_gradient_telescoping", dim, k, worst[1]);
            exact("first_order_expansion", dim, k, worst[2]);
            exact("truncated_expansion_first_two_steps", dim, k, worst[3]);
            exact("truncated_expansion_remainder", dim, k, worst[4]);
            exact("target_expansion", dim, k, worst[5]);
        }
        let mut worst_rem = 0.0f64;
        for seed in 0..config.seeds {
            let task = PolyTask::random(dim, 3, 0.0, seed);
            let theta0 = random_theta(dim, seed);
            let d = total_gradient_decomposition(&task, alpha, &theta0, 2)?;
            worst_rem = worst_rem.max(d.remainder);
        }
        exact("decomposition_remainder", dim, 2, worst_rem);
    }

    let (lo, hi) = config.ratio_range;
    let (dim, k) = (config.ratio_dim, config.ratio_k);
    let mut sums = [0.0f64; 3];
    for seed in 0..config.ratio_seeds {
        let task = PolyTask::random(dim, k + 1, config.cubic, 1000 + seed);
        let theta0 = random_theta(dim, 1000 + seed);
        let full = taylor_residual(&task, alpha, k, &theta0)?;
        let half = taylor_residual(&task, alpha / 2.0, k, &theta0)?;
        sums[0] += full.truncated[k - 1] / half.truncated[k - 1];
        sums[1] += full.expansion[k - 1] / half.expansion[k - 1];
        sums[2] += target_expansion_check(&task, k, alpha, k, &theta0)?
            / target_expansion_check(&task, k, alpha / 2.0, k, &theta0)?;
    }
    for (name, sum) in [
        "truncated_expansion_halving_ratio",
        "first_order_expansion_halving_ratio",
        "target_expansion_halving_ratio",
    ]
    .into_iter()
    .zip(sums)
    {
        let value = sum / config.ratio_seeds as f64;
        checks.push(CheckRecord {
            identity: name.to_string(),
            dim,
            k,
            alpha,
            cubic: config.cubic,
            seeds: config.ratio_seeds,
            value,
            lower: Some(lo),
            upper: hi,
            passed: value.is_finite() && (lo..=hi).contains(&value),
        });
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport { checks, passed })
}
