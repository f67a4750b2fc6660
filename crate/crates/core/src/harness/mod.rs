//! Experiment orchestration behind the command-line tool.
//!
//! An [`ExperimentConfig`] is one JSON document; every field has a default
//! and unknown keys are rejected. [`run`] trains each configured algorithm
//! for each seed and writes, under the output directory:
//!
//! * `metrics.csv`: one [`MetricsRecord`] per language per validation
//!   evaluation (`split = validation`) and per final test evaluation
//!   (`split = test`);
//! * `summary.json`: per-algorithm test exact match (mean and standard
//!   deviation over seeds) and per-run status;
//! * `runs/<algorithm>_seed<seed>/pca_<lang>.csv`: test encodings projected
//!   on principal components fit over all languages jointly;
//! * `checkpoints/<algorithm>_seed<seed>.xgr`: selected parameters;
//! * `INCOMPLETE`: present while runs are in progress or after a failure.

mod analyze;
mod compare;
mod config;
mod records;
mod run;
mod sweep;
mod verify;

pub use analyze::{analyze, AnalysisReport, LanguageAnalysis};
pub use compare::{compare, result_sets, CompareReport, Hypothesis, Pairwise, ResultSet, SetReport, Verdict};
pub use config::{ExperimentConfig, ModelConfig};
pub use records::{
    load_metrics, read_metrics, summarize, write_metrics, AlgorithmSummary, MeanStd, MetricsRecord, CSV_COLUMNS,
};
pub use run::{
    evaluate, joint_pca, run, write_pca_files, Evaluation, Experiment, RunInfo, RunOutput, RunSummary,
    INCOMPLETE_MARKER,
};
pub use sweep::{sweep, Axis, SweepOutput, SweepPoint, SweepSummary};
pub use verify::{
    gradient_report, model_grad_checks, random_parser_batch, GradientReport, ModelCheck, GRAD_CHECK_EPSILON,
    GRAD_CHECK_TOLERANCE,
};
