use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{glorot_uniform, Model};
use crate::error::{Error, Result};
use crate::params::{Layout, ParamVector};
use crate::rng::Stream;
use crate::tasks::Point;
use crate::tensor::{Graph, NodeId, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRegressorSpec {
    pub hidden: Vec<usize>,
}

impl Default for MlpRegressorSpec {
    fn default() -> Self {
        Self {
            hidden: vec![40, 40],
        }
    }
}

/// Scalar-to-scalar tanh MLP with squared-error loss.
#[derive(Debug, Clone)]
pub struct MlpRegressor {
    spec: MlpRegressorSpec,
    layout: Arc<Layout>,
}

impl MlpRegressor {
    pub fn new(spec: MlpRegressorSpec) -> Result<Self> {
        if spec.hidden.is_empty() || spec.hidden.contains(&0) {
            return Err(Error::Config(
                "MLP needs at least one non-empty hidden layer".into(),
            ));
        }
        let mut layout = Layout::new();
        let mut fan_in = 1;
        for (i, &h) in spec.hidden.iter().enumerate() {
            layout.push(format!("l{i}.w"), &[fan_in, h]);
            layout.push(format!("l{i}.b"), &[h]);
            fan_in = h;
        }
        layout.push("out.w", &[fan_in, 1]);
        layout.push("out.b", &[1]);
        Ok(Self {
            spec,
            layout: Arc::new(layout),
        })
    }

    pub fn spec(&self) -> &MlpRegressorSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = Stream::new(seed, "mlp-init");
        let mut p = ParamVector::zeros(self.layout.clone());
        for e in self.layout.entries() {
            if e.shape.len() == 2 {
                let block = p.block_mut(&e.name).expect("own layout");
                glorot_uniform(&mut rng, e.shape[0], e.shape[1], block);
            }
        }
        p
    }

    fn forward(&self, g: &mut Graph, params: &ParamVector, xs: &[f64]) -> Result<(Vec<NodeId>, NodeId)> {
        let mut leaves = Vec::with_capacity(self.layout.entries().len());
        for e in self.layout.entries() {
            leaves.push(g.leaf(params.tensor(&e.name)?));
        }
        let mut h = g.leaf(Tensor::matrix(xs.len(), 1, xs.to_vec())?);
        for layer in 0..self.spec.hidden.len() {
            let z = g.matmul(h, leaves[2 * layer])?;
            let z = g.add(z, leaves[2 * layer + 1])?;
            h = g.tanh(z)?;
        }
        let n = leaves.len();
        let out = g.matmul(h, leaves[n - 2])?;
        let out = g.add(out, leaves[n - 1])?;
        Ok((leaves, out))
    }

    pub fn predict(&self, params: &ParamVector, xs: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let (_, out) = self.forward(&mut g, params, xs)?;
        Ok(g.value(out).data().to_vec())
    }
}

impl Model for MlpRegressor {
    type Item = Point;

    fn batch_loss(&self, params: &ParamVector, batch: &[Point]) -> Result<(f64, ParamVector)> {
        if batch.is_empty() {
            return Err(Error::Empty("regression batch".into()));
        }
        let xs: Vec<f64> = batch.iter().map(|p| p.x).collect();
        let neg_y: Vec<f64> = batch.iter().map(|p| -p.y).collect();
        let mut g = Graph::new();
        let (leaves, pred) = self.forward(&mut g, params, &xs)?;
        let target = g.leaf(Tensor::matrix(batch.len(), 1, neg_y)?);
        let diff = g.add(pred, target)?;
        let sq = g.mul(diff, diff)?;
        let loss = g.mean(sq, 0)?;
        let grads = g.backward(loss)?;
        let mut out = Vec::with_capacity(params.len());
        for id in leaves {
            out.extend_from_slice(grads.get(id).data());
        }
        Ok((g.value(loss).data()[0], params.with_values(out)?))
    }
}
