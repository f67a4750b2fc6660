//! Support/target sampling regimes.
//!
//! Validation and test pairs are reserved first and are parallel across
//! every language. From the remaining usable pairs:
//!
//! * `parallel`: support is English on all usable pairs; every target
//!   language gets the same `round(p * N)` pairs, which overlap support.
//! * `subtractive`: one set of `round(p * N)` pairs becomes target data in
//!   every target language and is removed from English support.
//! * `all_disjoint`: each target language gets its own `round(p * N)`
//!   pairs; support keeps what no target took.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Corpus, Example};
use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Parallel,
    Subtractive,
    AllDisjoint,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Parallel => "parallel",
            Strategy::Subtractive => "subtractive",
            Strategy::AllDisjoint => "all_disjoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub strategy: Strategy,
    pub rate: f64,
    #[serde(default = "default_holdout")]
    pub validation_fraction: f64,
    #[serde(default = "default_holdout")]
    pub test_fraction: f64,
}

fn default_holdout() -> f64 {
    0.1
}

impl SplitConfig {
    pub fn new(strategy: Strategy, rate: f64) -> Self {
        Self {
            strategy,
            rate,
            validation_fraction: default_holdout(),
            test_fraction: default_holdout(),
        }
    }

    pub fn validate(&self, num_targets: usize) -> Result<()> {
        let p = self.rate;
        let ok = match self.strategy {
            Strategy::Parallel => p > 0.0 && p <= 1.0,
            _ => p > 0.0 && p < 1.0,
        };
        if !ok {
            return Err(Error::Sampling(format!(
                "rate {p} invalid for {} sampling",
                self.strategy.name()
            )));
        }
        if self.strategy == Strategy::AllDisjoint && num_targets as f64 * p > 1.0 {
            return Err(Error::Sampling(format!(
                "all_disjoint with {num_targets} targets at rate {p} leaves too few support examples"
            )));
        }
        let (v, t) = (self.validation_fraction, self.test_fraction);
        if !(0.0..1.0).contains(&v) || !(0.0..1.0).contains(&t) || v + t >= 1.0 {
            return Err(Error::Sampling(format!(
                "holdout fractions {v} + {t} must be non-negative and sum below 1"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub support_language: String,
    pub support: Vec<Example>,
    pub targets: BTreeMap<String, Vec<Example>>,
    pub validation: BTreeMap<String, Vec<Example>>,
    pub test: BTreeMap<String, Vec<Example>>,
    pub strategy: Strategy,
    pub rate: f64,
}

impl SampleSplit {
    pub fn target_languages(&self) -> Vec<String> {
        self.targets.keys().cloned().collect()
    }

    pub fn all_target_examples(&self) -> Vec<Example> {
        self.targets.values().flatten().cloned().collect()
    }

    pub fn pair_ids(examples: &[Example]) -> BTreeSet<usize> {
        examples.iter().map(|e| e.pair_id).collect()
    }
}

fn round_count(p: f64, n: usize) -> usize {
    (p * n as f64).round() as usize
}

pub fn split_sample(corpus: &Corpus, config: &SplitConfig, seed: u64) -> Result<SampleSplit> {
    let targets = corpus.target_languages();
    config.validate(targets.len())?;

    let n = corpus.num_pairs();
    let mut pairs: Vec<usize> = (0..n).collect();
    Stream::new(seed, "split").shuffle(&mut pairs);

    let n_val = round_count(config.validation_fraction, n);
    let n_test = round_count(config.test_fraction, n);
    if n_val + n_test >= n {
        return Err(Error::Sampling(format!(
            "{n} pairs leave nothing after holding out {n_val} + {n_test}"
        )));
    }
    let (val_ids, rest) = pairs.split_at(n_val);
    let (test_ids, usable) = rest.split_at(n_test);
    let usable_n = usable.len();
    let k = round_count(config.rate, usable_n);
    if k == 0 {
        return Err(Error::Sampling(format!(
            "rate {} of {usable_n} usable pairs selects no target examples",
            config.rate
        )));
    }

    let sorted = |ids: &[usize]| {
        let mut v = ids.to_vec();
        v.sort_unstable();
        v
    };

    let (support_ids, target_ids): (Vec<usize>, Vec<Vec<usize>>) = match config.strategy {
        Strategy::Parallel => {
            let shared = sorted(&usable[..k]);
            (sorted(usable), vec![shared; targets.len()])
        }
        Strategy::Subtractive => {
            let shared = sorted(&usable[..k]);
            (sorted(&usable[k..]), vec![shared; targets.len()])
        }
        Strategy::AllDisjoint => {
            let taken = k * targets.len();
            if taken >= usable_n {
                return Err(Error::Sampling(format!(
                    "all_disjoint leaves no support: {} targets x {k} pairs of {usable_n}",
                    targets.len()
                )));
            }
            let per: Vec<Vec<usize>> = (0..targets.len())
                .map(|i| sorted(&usable[i * k..(i + 1) * k]))
                .collect();
            (sorted(&usable[taken..]), per)
        }
    };
    if support_ids.is_empty() {
        return Err(Error::Sampling("no support examples remain".into()));
    }

    let realize = |ids: &[usize], lang: usize| -> Vec<Example> {
        ids.iter().map(|&p| corpus.example(p, lang).clone()).collect()
    };
    let per_language = |ids: &[usize]| -> BTreeMap<String, Vec<Example>> {
        let ids = {
            let mut v = ids.to_vec();
            v.sort_unstable();
            v
        };
        corpus
            .languages
            .iter()
            .enumerate()
            .map(|(li, tag)| (tag.clone(), realize(&ids, li)))
            .collect()
    };

    Ok(SampleSplit {
        support_language: corpus.support_language().to_string(),
        support: realize(&support_ids, 0),
        targets: targets
            .iter()
            .zip(&target_ids)
            .map(|(tag, ids)| {
                let li = corpus.language_index(tag).expect("target language in corpus");
                (tag.clone(), realize(ids, li))
            })
            .collect(),
        validation: per_language(val_ids),
        test: per_language(test_ids),
        strategy: config.strategy,
        rate: config.rate,
    })
}
