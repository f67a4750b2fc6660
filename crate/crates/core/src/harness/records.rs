use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::Algorithm;

/// One row of `metrics.csv`.
///
/// `split` is `validation` for evaluations during training (one row per
/// language and evaluation) and `test` for the final held-out evaluation of
/// the selected parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub k: usize,
    pub rate: f64,
    pub batch_size: usize,
    pub step: usize,
    pub split: String,
    pub language: String,
    /// `support` or `target`.
    pub role: String,
    pub exact_match: Option<f64>,
    pub validation_loss: Option<f64>,
    pub mean_cosine: Option<f64>,
    pub hausdorff: Option<f64>,
    pub wall_clock_seconds: Option<f64>,
}

pub const CSV_COLUMNS: &[&str] = &[
    "algorithm",
    "seed",
    "k",
    "rate",
    "batch_size",
    "step",
    "split",
    "language",
    "role",
    "exact_match",
    "validation_loss",
    "mean_cosine",
    "hausdorff",
    "wall_clock_seconds",
];

impl MetricsRecord {
    pub fn is_test(&self) -> bool {
        self.split == "test"
    }

    pub fn is_target(&self) -> bool {
        self.role == "target"
    }
}

pub fn write_metrics<W: Write>(w: W, records: &[MetricsRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricsRecord>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Config(format!("unexpected metrics columns {header:?}")));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    read_metrics(std::io::BufReader::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

/// Test exact match of one algorithm across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub languages: BTreeMap<String, MeanStd>,
    /// Per-seed mean over target languages.
    pub target_average_by_seed: BTreeMap<u64, f64>,
    pub target_average: MeanStd,
    pub mean_cosine: BTreeMap<String, MeanStd>,
    pub hausdorff: BTreeMap<String, MeanStd>,
}

/// Groups test rows by algorithm.
pub fn summarize(records: &[MetricsRecord]) -> BTreeMap<Algorithm, AlgorithmSummary> {
    let mut by_alg: BTreeMap<Algorithm, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_test()) {
        by_alg.entry(r.algorithm).or_default().push(r);
    }
    by_alg
        .into_iter()
        .map(|(alg, rows)| (alg, summarize_rows(&rows)))
        .collect()
}

pub(crate) fn summarize_rows(rows: &[&MetricsRecord]) -> AlgorithmSummary {
    let mut em: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut cos: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut haus: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut per_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.exact_match {
            em.entry(r.language.clone()).or_default().push(v);
            if r.is_target() {
                per_seed.entry(r.seed).or_default().push(v);
            }
        }
        if let Some(v) = r.mean_cosine {
            cos.entry(r.language.clone()).or_default().push(v);
        }
        if let Some(v) = r.hausdorff {
            haus.entry(r.language.clone()).or_default().push(v);
        }
    }
    let stats = |m: BTreeMap<String, Vec<f64>>| m.into_iter().map(|(k, v)| (k, MeanStd::of(&v))).collect();
    let target_average_by_seed: BTreeMap<u64, f64> = per_seed
        .into_iter()
        .map(|(s, v)| (s, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let avgs: Vec<f64> = target_average_by_seed.values().copied().collect();
    AlgorithmSummary {
        languages: stats(em),
        target_average: MeanStd::of(&avgs),
        target_average_by_seed,
        mean_cosine: stats(cos),
        hausdorff: stats(haus),
    }
}
