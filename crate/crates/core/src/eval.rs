//! Accuracy metrics and representation similarity between languages.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Seq2SeqParser, EOS, PAD};
use crate::params::ParamVector;
use crate::tasks::Example;

fn strip(tokens: &[usize]) -> impl Iterator<Item = &usize> {
    tokens.iter().filter(|&&t| t != EOS && t != PAD)
}

/// Fraction of predictions equal to their gold sequence, ignoring EOS and
/// padding tokens.
pub fn exact_match(predictions: &[Vec<usize>], golds: &[Vec<usize>]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::ShapeMismatch {
            op: "exact_match",
            lhs: vec![predictions.len()],
            rhs: vec![golds.len()],
        });
    }
    if golds.is_empty() {
        return Err(Error::Empty("exact_match inputs".into()));
    }
    let hits = predictions
        .iter()
        .zip(golds)
        .filter(|(p, g)| strip(p).eq(strip(g)))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Greedy-decodes `examples` and scores them against their logical forms.
pub fn parser_exact_match(model: &Seq2SeqParser, params: &ParamVector, examples: &[Example]) -> Result<f64> {
    let inputs: Vec<Vec<usize>> = examples.iter().map(Example::encoder_input).collect();
    let mut predictions = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(128) {
        predictions.extend(model.decode_greedy_batch(params, chunk)?);
    }
    let golds: Vec<Vec<usize>> = examples.iter().map(|e| e.logical_form.clone()).collect();
    exact_match(&predictions, &golds)
}

/// Sentence encodings of one language, rows ordered by ascending pair id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSet {
    pub language: String,
    pub pair_ids: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl EncodingSet {
    pub fn new(language: impl Into<String>, pair_ids: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if pair_ids.len() != rows.len() {
            return Err(Error::ShapeMismatch {
                op: "encoding_set",
                lhs: vec![pair_ids.len()],
                rhs: vec![rows.len()],
            });
        }
        if pair_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidTensor("pair ids must be strictly ascending".into()));
        }
        Ok(Self {
            language: language.into(),
            pair_ids,
            rows,
        })
    }

    /// Encodes `examples` (all of one language) in pair-id order.
    pub fn encode(model: &Seq2SeqParser, params: &ParamVector, examples: &[Example]) -> Result<Self> {
        let mut sorted: Vec<&Example> = examples.iter().collect();
        sorted.sort_by_key(|e| e.pair_id);
        let language = sorted
            .first()
            .map(|e| e.language.clone())
            .ok_or_else(|| Error::Empty("examples to encode".into()))?;
        if sorted.iter().any(|e| e.language != language) {
            return Err(Error::InvalidTensor("encoding set mixes languages".into()));
        }
        let inputs: Vec<Vec<usize>> = sorted.iter().map(|e| e.encoder_input()).collect();
        let mut rows = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(128) {
            rows.extend(model.encode_batch(params, chunk)?);
        }
        Self::new(language, sorted.iter().map(|e| e.pair_id).collect(), rows)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean cosine similarity between rows with the same pair id.
pub fn mean_pairwise_cosine(a: &EncodingSet, b: &EncodingSet) -> Result<f64> {
    if a.pair_ids != b.pair_ids {
        return Err(Error::InvalidTensor(format!(
            "{} and {} encode different pairs",
            a.language, b.language
        )));
    }
    if a.rows.is_empty() {
        return Err(Error::Empty("encoding set".into()));
    }
    let mut total = 0.0;
    for ((x, y), id) in a.rows.iter().zip(&b.rows).zip(&a.pair_ids) {
        let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
        if nx == 0.0 || ny == 0.0 {
            return Err(Error::InvalidTensor(format!("zero-norm encoding for pair {id}")));
        }
        total += dot(x, y) / (nx * ny);
    }
    Ok(total / a.rows.len() as f64)
}

fn directed_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|x| b.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance under the Euclidean metric.
pub fn hausdorff_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("point set".into()));
    }
    Ok(directed_hausdorff(a, b).max(directed_hausdorff(b, a)))
}

pub const PCA_TOLERANCE: f64 = 1e-10;
pub const PCA_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    /// Unit principal directions, largest variance first.
    pub components: Vec<Vec<f64>>,
    /// Fraction of total variance along each component.
    pub explained: Vec<f64>,
    /// Projected rows, one per input row.
    pub coords: Vec<Vec<f64>>,
}

impl Projection {
    pub fn project(&self, row: &[f64]) -> Vec<f64> {
        let centred: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components.iter().map(|c| dot(c, &centred)).collect()
    }
}

fn normalise(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn orient(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| **x != 0.0) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Top `dims` principal components by power iteration with deflation.
pub fn pca_project(rows: &[Vec<f64>], dims: usize) -> Result<Projection> {
    let n = rows.len();
    if dims == 0 {
        return Err(Error::Config("dims must be at least 1".into()));
    }
    if n < dims + 1 {
        return Err(Error::Empty(format!("PCA into {dims} dims needs at least {} rows", dims + 1)));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidTensor("rows have different widths".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x / n as f64;
        }
    }
    let centred: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] += r[i] * r[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let floor = 1e-12 * trace.max(f64::MIN_POSITIVE);

    let mut components = Vec::with_capacity(dims);
    let mut explained = Vec::with_capacity(dims);
    for achieved in 0..dims {
        // Start from the largest column of the deflated covariance.
        let col = (0..d)
            .max_by(|&a, &b| {
                let na: f64 = (0..d).map(|i| cov[i * d + a].powi(2)).sum();
                let nb: f64 = (0..d).map(|i| cov[i * d + b].powi(2)).sum();
                na.total_cmp(&nb).then(b.cmp(&a))
            })
            .unwrap_or(0);
        let mut v: Vec<f64> = (0..d).map(|i| cov[i * d + col] + 1e-3).collect();
        if normalise(&mut v) == 0.0 {
            return Err(Error::RankDeficient { achieved, requested: dims });
        }
        let mut lambda = 0.0;
        for _ in 0..PCA_MAX_ITERS {
            let mut w: Vec<f64> = (0..d).map(|i| dot(&cov[i * d..(i + 1) * d], &v)).collect();
            lambda = normalise(&mut w);
            if lambda == 0.0 {
                break;
            }
            let aligned = if dot(&w, &v) < 0.0 { -1.0 } else { 1.0 };
            let change = w.iter().zip(&v).map(|(a, b)| (aligned * a - b).abs()).fold(0.0, f64::max);
            v = w;
            if change < PCA_TOLERANCE {
                break;
            }
        }
        if lambda <= floor {
            return Err(Error::RankDeficient { achieved, requested: dims });
        }
        let lambda = {
            let cv: Vec<f64> = (0..d).map(|i| dot(&cov[i * d..(i + 1) * d], &v)).collect();
            dot(&v, &cv)
        };
        orient(&mut v);
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= lambda * v[i] * v[j];
            }
        }
        explained.push(lambda / trace);
        components.push(v);
    }
    let coords = centred
        .iter()
        .map(|r| components.iter().map(|c| dot(c, r)).collect())
        .collect();
    Ok(Projection {
        mean,
        components,
        explained,
        coords,
    })
}

/// Similarity of each language's encodings to the support language's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub language: String,
    pub mean_cosine: f64,
    pub hausdorff: f64,
}

pub fn similarity_to(support: &EncodingSet, other: &EncodingSet) -> Result<Similarity> {
    Ok(Similarity {
        language: other.language.clone(),
        mean_cosine: mean_pairwise_cosine(support, other)?,
        hausdorff: hausdorff_distance(&support.rows, &other.rows)?,
    })
}
