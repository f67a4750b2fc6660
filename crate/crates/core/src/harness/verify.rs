use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grad_analysis::{verify_gradients, VerificationReport, VerifyConfig};
use crate::gradcheck::grad_check;
use crate::models::{MlpRegressor, MlpRegressorSpec, Model, Seq2SeqParser, Seq2SeqParserSpec};
use crate::rng::Stream;
use crate::tasks::{sinusoid_family, Example};

pub const GRAD_CHECK_EPSILON: f64 = 1e-5;
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheck {
    pub model: String,
    pub seeds: u64,
    /// Worst relative error over seeds.
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub models: Vec<ModelCheck>,
    pub analysis: VerificationReport,
    pub passed: bool,
}

/// Random three-example batch for a small parser.
pub fn random_parser_batch(spec: &Seq2SeqParserSpec, seed: u64) -> Vec<Example> {
    let mut rng = Stream::new(seed, "gradcheck-batch");
    (0..3)
        .map(|i| {
            let n = 1 + rng.below(4);
            let m = 1 + rng.below(3);
            Example {
                pair_id: i,
                language: "xx".into(),
                utterance: (0..n).map(|_| 1 + rng.below(spec.input_vocab_size - 1)).collect(),
                logical_form: (0..m).map(|_| 3 + rng.below(spec.output_vocab_size - 3)).collect(),
                context: Vec::new(),
            }
        })
        .collect()
}

/// Finite-difference checks of both model gradients over `seeds` seeds.
pub fn model_grad_checks(seeds: u64) -> Result<Vec<ModelCheck>> {
    let spec = Seq2SeqParserSpec {
        input_vocab_size: 9,
        output_vocab_size: 8,
        embed_dim: 4,
        hidden_dim: 5,
        max_decode_len: 6,
    };
    let parser = Seq2SeqParser::new(spec.clone())?;
    let mlp = MlpRegressor::new(MlpRegressorSpec { hidden: vec![6, 5] })?;
    let (mut parser_err, mut mlp_err) = (0.0f64, 0.0f64);
    for seed in 0..seeds {
        let batch = random_parser_batch(&spec, seed);
        let p = parser.init_params(seed);
        parser_err = parser_err.max(grad_check(|q| parser.batch_loss(q, &batch), &p, GRAD_CHECK_EPSILON)?);

        let task = &sinusoid_family((0.5, 2.0), (0.0, 3.0), 1, 5, seed)?[0];
        let p = mlp.init_params(seed);
        mlp_err = mlp_err.max(grad_check(|q| mlp.batch_loss(q, &task.points), &p, GRAD_CHECK_EPSILON)?);
    }
    Ok([("seq2seq_parser", parser_err), ("mlp_regressor", mlp_err)]
        .into_iter()
        .map(|(model, max_error)| ModelCheck {
            model: model.into(),
            seeds,
            max_error,
            tolerance: GRAD_CHECK_TOLERANCE,
            passed: max_error <= GRAD_CHECK_TOLERANCE,
        })
        .collect())
}

pub fn gradient_report(config: &VerifyConfig, model_seeds: u64) -> Result<GradientReport> {
    let models = model_grad_checks(model_seeds)?;
    let analysis = verify_gradients(config)?;
    let passed = analysis.passed && models.iter().all(|m| m.passed);
    Ok(GradientReport { models, analysis, passed })
}
