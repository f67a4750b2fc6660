//! Training procedures: XG-Reptile and the baseline family.
//!
//! | algorithm    | stage 1                         | stage 2                  |
//! |--------------|---------------------------------|--------------------------|
//! | `joint`      | supervised on support + targets | -                        |
//! | `finetune`   | supervised on support           | supervised on targets    |
//! | `reptile_ft` | Reptile episodes on support     | supervised on targets    |
//! | `xg_reptile` | XG-Reptile episodes             | -                        |
//!
//! A step is one update of the trained parameters: one batch for
//! supervised stages, one episode (K inner steps plus the target step) for
//! episodic stages. Supervised stages use the outer optimizer settings.
//! With [`Budget::SupportBatches`], `max_steps` and `eval_interval` of
//! episodic stages count support batches instead, so an episodic stage runs
//! `ceil(max_steps / K)` episodes.
//!
//! Every stage evaluates on validation data every `eval_interval` steps,
//! keeps the best parameters, and stops after `patience` evaluations
//! without improvement. Stages that see target data select on the mean
//! validation loss over all languages (support and each target weighted
//! equally); support-only stages select on support validation loss.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::episode::{reptile_episode, xg_reptile_episode, EpisodeConfig};
use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::params::ParamVector;
use crate::rng::Stream;
use crate::tasks::{BatchStream, Example, SampleSplit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Joint,
    Finetune,
    ReptileFt,
    XgReptile,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Joint,
        Algorithm::Finetune,
        Algorithm::ReptileFt,
        Algorithm::XgReptile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Joint => "joint",
            Algorithm::Finetune => "finetune",
            Algorithm::ReptileFt => "reptile_ft",
            Algorithm::XgReptile => "xg_reptile",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Unit of the episodic step budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Parameter updates: one per episode.
    #[default]
    Updates,
    /// Support batches: `K` per episode.
    SupportBatches,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_steps: usize,
    /// Step budget of the target fine-tuning stage; `None` means `max_steps`.
    pub finetune_steps: Option<usize>,
    /// Evaluations without improvement before stopping.
    pub patience: usize,
    pub eval_interval: usize,
    /// Validation examples used per language; `None` uses all.
    pub validation_limit: Option<usize>,
    pub budget: Budget,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 20_000,
            finetune_steps: None,
            patience: 10,
            eval_interval: 500,
            validation_limit: None,
            budget: Budget::Updates,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if self.finetune_steps == Some(0) {
            return Err(Error::Config("finetune_steps must be at least 1".into()));
        }
        if self.eval_interval == 0 || self.patience == 0 {
            return Err(Error::Config(
                "eval_interval and patience must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Schedule of an episodic stage with `k` support batches per episode.
    fn episodic(&self, k: usize) -> Self {
        match self.budget {
            Budget::Updates => self.clone(),
            Budget::SupportBatches => Self {
                max_steps: self.max_steps.div_ceil(k),
                eval_interval: self.eval_interval.div_ceil(k),
                ..self.clone()
            },
        }
    }
}

/// One validation evaluation during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub stage: usize,
    /// Steps taken within the stage.
    pub step: usize,
    /// Steps taken across all stages.
    pub global_step: usize,
    /// Selection criterion of the stage.
    pub selection_loss: f64,
    pub language_losses: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best parameters of the final stage.
    pub params: ParamVector,
    pub history: Vec<EvalPoint>,
    pub steps: usize,
    /// Target batches consumed by XG-Reptile episodes.
    pub target_batches: usize,
}

/// Mean loss of `examples`, evaluated in chunks.
pub fn dataset_loss<M: Model>(model: &M, params: &ParamVector, examples: &[M::Item]) -> Result<f64> {
    const CHUNK: usize = 128;
    if examples.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let mut total = 0.0;
    for chunk in examples.chunks(CHUNK) {
        total += model.batch_value(params, chunk)? * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Selection {
    SupportOnly,
    Combined,
}

struct Validator<'a> {
    sets: Vec<(&'a str, &'a [Example])>,
    support_language: &'a str,
}

impl<'a> Validator<'a> {
    fn new(split: &'a SampleSplit, limit: Option<usize>) -> Result<Self> {
        let sets: Vec<(&str, &[Example])> = split
            .validation
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(l, v)| {
                let n = limit.map_or(v.len(), |k| k.min(v.len()));
                (l.as_str(), &v[..n])
            })
            .collect();
        if !sets.iter().any(|(l, _)| *l == split.support_language) {
            return Err(Error::Config(
                "validation data for the support language is required".into(),
            ));
        }
        Ok(Self {
            sets,
            support_language: &split.support_language,
        })
    }

    fn evaluate<M: Model<Item = Example>>(
        &self,
        model: &M,
        params: &ParamVector,
        selection: Selection,
    ) -> Result<(f64, BTreeMap<String, f64>)> {
        let mut losses = BTreeMap::new();
        for (lang, set) in &self.sets {
            if selection == Selection::SupportOnly && *lang != self.support_language {
                continue;
            }
            losses.insert(lang.to_string(), dataset_loss(model, params, set)?);
        }
        let crit = losses.values().sum::<f64>() / losses.len() as f64;
        Ok((crit, losses))
    }
}

/// Runs up to `budget` steps of `step_fn` with periodic validation and
/// early stopping; returns the best parameters seen.
#[allow(clippy::too_many_arguments)]
fn run_stage<M, F>(
    model: &M,
    validator: &Validator,
    selection: Selection,
    stage: usize,
    start: ParamVector,
    budget: usize,
    config: &TrainConfig,
    global_offset: usize,
    history: &mut Vec<EvalPoint>,
    mut step_fn: F,
) -> Result<(ParamVector, usize)>
where
    M: Model<Item = Example>,
    F: FnMut(&ParamVector) -> Result<ParamVector>,
{
    let record = |params: &ParamVector, step: usize, history: &mut Vec<EvalPoint>| -> Result<f64> {
        let (crit, language_losses) = validator.evaluate(model, params, selection)?;
        history.push(EvalPoint {
            stage,
            step,
            global_step: global_offset + step,
            selection_loss: crit,
            language_losses,
        });
        Ok(crit)
    };

    let mut best_loss = record(&start, 0, history)?;
    let mut best = start.clone();
    let mut params = start;
    let mut stale = 0;
    let mut steps = 0;
    while steps < budget {
        params = step_fn(&params)?;
        steps += 1;
        if steps % config.eval_interval == 0 || steps == budget {
            let loss = record(&params, steps, history)?;
            if loss < best_loss {
                best_loss = loss;
                best = params.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }
    Ok((best, steps))
}

fn stream_seed(seed: u64, purpose: &str) -> u64 {
    Stream::new(seed, purpose).next_u64()
}

/// Trains `init` with `algorithm` on `split`.
#[allow(clippy::too_many_arguments)]
pub fn train<M: Model<Item = Example>>(
    model: &M,
    init: ParamVector,
    algorithm: Algorithm,
    split: &SampleSplit,
    episode: &EpisodeConfig,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    episode.validate()?;
    config.validate()?;
    if split.support.is_empty() {
        return Err(Error::Config("split has no support examples".into()));
    }
    let target_pool = split.all_target_examples();
    if algorithm != Algorithm::Joint && target_pool.is_empty() {
        return Err(Error::Config(format!(
            "{algorithm} needs target-language examples but the split has none"
        )));
    }
    let validator = Validator::new(split, config.validation_limit)?;
    let with_targets = if target_pool.is_empty() {
        Selection::SupportOnly
    } else {
        Selection::Combined
    };
    let bs = episode.batch_size;
    let mut history = Vec::new();
    let mut target_batches = 0;

    let supervised = |pool: Vec<Example>, purpose: &str| -> Result<(BatchStream<Example>, OptimizerState)> {
        Ok((
            BatchStream::new(pool, bs, stream_seed(seed, purpose), true)?,
            episode.outer_state(),
        ))
    };
    let finetune_budget = config.finetune_steps.unwrap_or(config.max_steps);
    let episodic = config.episodic(episode.k);

    let (params, steps) = match algorithm {
        Algorithm::Joint => {
            let mut pool = split.support.clone();
            pool.extend(target_pool);
            let (mut stream, mut opt) = supervised(pool, "joint")?;
            run_stage(model, &validator, with_targets, 1, init, config.max_steps, config, 0, &mut history, |p| {
                let batch = stream.next_batch().expect("recycling stream");
                let (_, g) = model.batch_loss(p, &batch)?;
                opt.step(p, &g)
            })?
        }
        Algorithm::Finetune | Algorithm::ReptileFt => {
            let (pre, pre_steps) = if algorithm == Algorithm::Finetune {
                let (mut stream, mut opt) = supervised(split.support.clone(), "pretrain")?;
                run_stage(model, &validator, Selection::SupportOnly, 1, init, config.max_steps, config, 0, &mut history, |p| {
                    let batch = stream.next_batch().expect("recycling stream");
                    let (_, g) = model.batch_loss(p, &batch)?;
                    opt.step(p, &g)
                })?
            } else {
                let (mut stream, mut outer) = supervised(split.support.clone(), "pretrain")?;
                run_stage(model, &validator, Selection::SupportOnly, 1, init, episodic.max_steps, &episodic, 0, &mut history, |p| {
                    let batches: Vec<Vec<Example>> = (0..episode.k)
                        .map(|_| stream.next_batch().expect("recycling stream"))
                        .collect();
                    Ok(reptile_episode(model, p, &batches, episode, &mut outer)?.theta)
                })?
            };
            let (mut stream, mut opt) = supervised(target_pool, "finetune")?;
            let (best, ft_steps) = run_stage(model, &validator, with_targets, 2, pre, finetune_budget, config, pre_steps, &mut history, |p| {
                let batch = stream.next_batch().expect("recycling stream");
                let (_, g) = model.batch_loss(p, &batch)?;
                opt.step(p, &g)
            })?;
            (best, pre_steps + ft_steps)
        }
        Algorithm::XgReptile => {
            let mut support = BatchStream::new(split.support.clone(), bs, stream_seed(seed, "support"), true)?;
            let mut targets: Vec<BatchStream<Example>> = split
                .targets
                .iter()
                .filter(|(_, v)| !v.is_empty())
                .map(|(lang, v)| {
                    BatchStream::new(v.clone(), bs, stream_seed(seed, &format!("target/{lang}")), true)
                })
                .collect::<Result<_>>()?;
            let mut pick = Stream::new(seed, "target-language");
            let mut outer = episode.outer_state();
            let counter = &mut target_batches;
            run_stage(model, &validator, with_targets, 1, init, episodic.max_steps, &episodic, 0, &mut history, |p| {
                let batches: Vec<Vec<Example>> = (0..episode.k)
                    .map(|_| support.next_batch().expect("recycling stream"))
                    .collect();
                let lang = pick.below(targets.len());
                let target = targets[lang].next_batch().expect("recycling stream");
                *counter += 1;
                Ok(xg_reptile_episode(model, p, &batches, &target, episode, &mut outer)?.theta)
            })?
        }
    };

    Ok(TrainOutcome {
        params,
        history,
        steps,
        target_batches,
    })
}
