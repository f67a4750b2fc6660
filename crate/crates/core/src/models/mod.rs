//! Parametric models and the interface the training algorithms use.

mod checkpoint;
mod mlp;
mod seq2seq;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use mlp::{MlpRegressor, MlpRegressorSpec};
pub use seq2seq::{Seq2SeqParser, Seq2SeqParserSpec, BOS, EOS, PAD};

use crate::error::Result;
use crate::params::ParamVector;
use crate::rng::Stream;

/// Anything with a differentiable mean loss over a batch of items.
pub trait Model: Sync {
    type Item: Sync;

    /// Mean loss over `batch` and its gradient, laid out like `params`.
    fn batch_loss(&self, params: &ParamVector, batch: &[Self::Item]) -> Result<(f64, ParamVector)>;

    /// Mean loss only; models may override to skip the backward pass.
    fn batch_value(&self, params: &ParamVector, batch: &[Self::Item]) -> Result<f64> {
        Ok(self.batch_loss(params, batch)?.0)
    }
}

/// Uniform `[-s, s]` with `s = sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot_uniform(rng: &mut Stream, fan_in: usize, fan_out: usize, out: &mut [f64]) {
    let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.uniform(-s, s);
    }
}
