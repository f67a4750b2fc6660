use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{evaluate, joint_pca, write_json, write_pca_files, Experiment};
use crate::error::{Error, Result};
use crate::models::load_checkpoint;
use crate::params::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageAnalysis {
    pub exact_match: f64,
    pub mean_cosine: f64,
    pub hausdorff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub checkpoint: String,
    pub seed: u64,
    pub support_language: String,
    pub explained_variance: Vec<f64>,
    pub languages: BTreeMap<String, LanguageAnalysis>,
}

/// Re-evaluates a checkpoint on the test split that `config` and `seed`
/// produce and writes `pca_<lang>.csv` files and `analysis.json` to `out`.
pub fn analyze(config: &ExperimentConfig, checkpoint: &Path, seed: u64, out: &Path) -> Result<AnalysisReport> {
    let exp = Experiment::new(config.clone())?;
    let ckpt = load_checkpoint(checkpoint)?;
    if **ckpt.params.layout() != **exp.model.layout() {
        return Err(Error::LayoutMismatch(format!(
            "{} does not match the model the config describes",
            checkpoint.display()
        )));
    }
    let params = ParamVector::new(exp.model.layout().clone(), ckpt.params.values().to_vec())?;
    let split = exp.split(seed)?;
    let ev = evaluate(&exp.model, &params, &split)?;
    let projection = joint_pca(&ev.encodings, config.pca_dims)?;
    write_pca_files(out, &ev.encodings, &projection)?;
    let report = AnalysisReport {
        checkpoint: checkpoint.display().to_string(),
        seed,
        support_language: split.support_language.clone(),
        explained_variance: projection.explained.clone(),
        languages: ev
            .exact_match
            .iter()
            .map(|(l, em)| {
                (
                    l.clone(),
                    LanguageAnalysis {
                        exact_match: *em,
                        mean_cosine: ev.mean_cosine[l],
                        hausdorff: ev.hausdorff[l],
                    },
                )
            })
            .collect(),
    };
    write_json(&out.join("analysis.json"), &report)?;
    Ok(report)
}
