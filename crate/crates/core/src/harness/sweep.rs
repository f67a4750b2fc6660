use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::records::{summarize, write_metrics, MeanStd, MetricsRecord};
use super::run::{run, thread_pool, write_json};
use crate::error::{Error, Result};
use crate::meta::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    K,
    Rate,
    BatchSize,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "k",
            Axis::Rate => "rate",
            Axis::BatchSize => "batch_size",
        }
    }

    /// `base` with the axis set to `value`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            Axis::K => cfg.episode.k = count()?,
            Axis::BatchSize => cfg.episode.batch_size = count()?,
            Axis::Rate => cfg.split.rate = value,
        }
        cfg.output_dir = base.output_dir.join(format!("{}_{value}", self.name()));
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" | "K" => Ok(Axis::K),
            "rate" => Ok(Axis::Rate),
            "batch_size" => Ok(Axis::BatchSize),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?} (k, rate, batch_size)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub error: Option<String>,
    /// Target-average test exact match per algorithm.
    pub target_average: BTreeMap<Algorithm, MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
}

impl SweepSummary {
    pub fn failures(&self) -> impl Iterator<Item = &SweepPoint> {
        self.points.iter().filter(|p| p.error.is_some())
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub summary: SweepSummary,
    /// Test rows of every successful point.
    pub records: Vec<MetricsRecord>,
}

/// One run per value, `jobs` points at a time. A failing point is recorded
/// in the summary and does not stop the others. Writes `sweep.csv` and
/// `sweep_summary.json` under `base.output_dir`.
pub fn sweep(base: &ExperimentConfig, axis: Axis, values: &[f64], jobs: usize) -> Result<SweepOutput> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    base.validate()?;
    fs::create_dir_all(&base.output_dir)?;
    let pool = thread_pool(jobs)?;
    let results: Vec<Result<Vec<MetricsRecord>>> = pool.install(|| {
        values
            .par_iter()
            .map(|&v| {
                let cfg = axis.apply(base, v)?;
                Ok(run(&cfg, 1)?.test_records().cloned().collect())
            })
            .collect()
    });

    let mut records = Vec::new();
    let mut points = Vec::new();
    for (&value, result) in values.iter().zip(results) {
        match result {
            Ok(rows) => {
                let target_average = summarize(&rows)
                    .into_iter()
                    .map(|(a, s)| (a, s.target_average))
                    .collect();
                points.push(SweepPoint { value, error: None, target_average });
                records.extend(rows);
            }
            Err(e) => points.push(SweepPoint {
                value,
                error: Some(e.to_string()),
                target_average: BTreeMap::new(),
            }),
        }
    }
    let summary = SweepSummary { axis, points };
    write_metrics(BufWriter::new(fs::File::create(base.output_dir.join("sweep.csv"))?), &records)?;
    write_json(&base.output_dir.join("sweep_summary.json"), &summary)?;
    Ok(SweepOutput { summary, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_application() {
        let base = ExperimentConfig::default();
        assert_eq!(Axis::K.apply(&base, 1.0).unwrap().episode.k, 1);
        assert_eq!(Axis::BatchSize.apply(&base, 20.0).unwrap().episode.batch_size, 20);
        assert_eq!(Axis::Rate.apply(&base, 0.05).unwrap().split.rate, 0.05);
        assert!(Axis::K.apply(&base, 2.5).is_err());
        assert!(Axis::Rate.apply(&base, 1.5).is_err());
        assert_eq!("batch_size".parse::<Axis>().unwrap(), Axis::BatchSize);
        assert!("lr".parse::<Axis>().is_err());
    }
}
