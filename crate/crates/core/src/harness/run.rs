use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::records::{summarize, write_metrics, AlgorithmSummary, MetricsRecord};
use crate::error::{Error, Result};
use crate::eval::{parser_exact_match, pca_project, similarity_to, EncodingSet, Projection};
use crate::meta::{dataset_loss, train, Algorithm, TrainOutcome};
use crate::models::{save_checkpoint, Seq2SeqParser};
use crate::params::ParamVector;
use crate::tasks::{generate_corpus, split_sample, Corpus, SampleSplit};

/// Present in an output directory until every run in it has finished.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub steps: usize,
    pub checkpoint: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub complete: bool,
    pub config: ExperimentConfig,
    pub runs: Vec<RunInfo>,
    pub algorithms: BTreeMap<Algorithm, AlgorithmSummary>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: RunSummary,
}

impl RunOutput {
    pub fn test_records(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.records.iter().filter(|r| r.is_test())
    }
}

/// Corpus and parser shared by every run of a config.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub corpus: Corpus,
    pub model: Seq2SeqParser,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let corpus = generate_corpus(&config.corpus, config.corpus_seed)?;
        let model = Seq2SeqParser::new(config.model.spec(&corpus.vocab))?;
        Ok(Self { config, corpus, model })
    }

    pub fn split(&self, seed: u64) -> Result<SampleSplit> {
        split_sample(&self.corpus, &self.config.split, seed)
    }

    pub fn train(&self, algorithm: Algorithm, split: &SampleSplit, seed: u64) -> Result<TrainOutcome> {
        train(
            &self.model,
            self.model.init_params(seed),
            algorithm,
            split,
            &self.config.episode,
            &self.config.train,
            seed,
        )
    }

    pub fn model_description(&self) -> serde_json::Value {
        serde_json::json!({ "seq2seq": self.model.spec() })
    }
}

/// Test-set evaluation of one parameter vector.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub exact_match: BTreeMap<String, f64>,
    pub validation_loss: BTreeMap<String, f64>,
    pub encodings: BTreeMap<String, EncodingSet>,
    pub mean_cosine: BTreeMap<String, f64>,
    pub hausdorff: BTreeMap<String, f64>,
}

pub fn evaluate(model: &Seq2SeqParser, params: &ParamVector, split: &SampleSplit) -> Result<Evaluation> {
    let mut ev = Evaluation {
        exact_match: BTreeMap::new(),
        validation_loss: BTreeMap::new(),
        encodings: BTreeMap::new(),
        mean_cosine: BTreeMap::new(),
        hausdorff: BTreeMap::new(),
    };
    for (lang, test) in &split.test {
        if test.is_empty() {
            continue;
        }
        ev.exact_match.insert(lang.clone(), parser_exact_match(model, params, test)?);
        if let Some(val) = split.validation.get(lang).filter(|v| !v.is_empty()) {
            ev.validation_loss.insert(lang.clone(), dataset_loss(model, params, val)?);
        }
        ev.encodings.insert(lang.clone(), EncodingSet::encode(model, params, test)?);
    }
    let support = ev
        .encodings
        .get(&split.support_language)
        .ok_or_else(|| Error::Config("split has no support test set".into()))?;
    for (lang, enc) in &ev.encodings {
        let s = similarity_to(support, enc)?;
        ev.mean_cosine.insert(lang.clone(), s.mean_cosine);
        ev.hausdorff.insert(lang.clone(), s.hausdorff);
    }
    Ok(ev)
}

/// Principal components fit jointly over every language's encodings.
pub fn joint_pca(encodings: &BTreeMap<String, EncodingSet>, dims: usize) -> Result<Projection> {
    let rows: Vec<Vec<f64>> = encodings.values().flat_map(|e| e.rows.iter().cloned()).collect();
    pca_project(&rows, dims)
}

pub fn write_pca_files(dir: &Path, encodings: &BTreeMap<String, EncodingSet>, projection: &Projection) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dims = projection.components.len();
    for (lang, enc) in encodings {
        let mut w = csv::Writer::from_path(dir.join(format!("pca_{lang}.csv")))?;
        let mut header = vec!["language".to_string(), "pair_id".to_string()];
        header.extend((1..=dims).map(|i| format!("pc{i}")));
        w.write_record(&header)?;
        for (id, row) in enc.pair_ids.iter().zip(&enc.rows) {
            let mut rec = vec![lang.clone(), id.to_string()];
            rec.extend(projection.project(row).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_name(algorithm: Algorithm, seed: u64) -> String {
    format!("{algorithm}_seed{seed}")
}

struct SingleRun {
    records: Vec<MetricsRecord>,
    info: RunInfo,
}

fn run_single(exp: &Experiment, algorithm: Algorithm, seed: u64, out: &Path) -> Result<SingleRun> {
    let cfg = &exp.config;
    let split = exp.split(seed)?;
    let start = Instant::now();
    let outcome = exp.train(algorithm, &split, seed)?;
    let seconds = start.elapsed().as_secs_f64();
    let role = |lang: &str| if lang == split.support_language { "support" } else { "target" };
    let base = MetricsRecord {
        algorithm,
        seed,
        k: cfg.episode.k,
        rate: cfg.split.rate,
        batch_size: cfg.episode.batch_size,
        step: 0,
        split: String::new(),
        language: String::new(),
        role: String::new(),
        exact_match: None,
        validation_loss: None,
        mean_cosine: None,
        hausdorff: None,
        wall_clock_seconds: None,
    };

    let mut records = Vec::new();
    for point in &outcome.history {
        for (lang, loss) in &point.language_losses {
            records.push(MetricsRecord {
                step: point.global_step,
                split: "validation".into(),
                language: lang.clone(),
                role: role(lang).into(),
                validation_loss: Some(*loss),
                ..base.clone()
            });
        }
    }

    let ev = evaluate(&exp.model, &outcome.params, &split)?;
    for (lang, em) in &ev.exact_match {
        records.push(MetricsRecord {
            step: outcome.steps,
            split: "test".into(),
            language: lang.clone(),
            role: role(lang).into(),
            exact_match: Some(*em),
            validation_loss: ev.validation_loss.get(lang).copied(),
            mean_cosine: ev.mean_cosine.get(lang).copied(),
            hausdorff: ev.hausdorff.get(lang).copied(),
            wall_clock_seconds: Some(seconds),
            ..base.clone()
        });
    }

    let name = run_name(algorithm, seed);
    let projection = joint_pca(&ev.encodings, cfg.pca_dims)?;
    write_pca_files(&out.join("runs").join(&name), &ev.encodings, &projection)?;
    let checkpoint = if cfg.save_checkpoints {
        let dir = out.join("checkpoints");
        fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{name}.xgr"));
        save_checkpoint(&path, &exp.model_description(), &outcome.params)?;
        Some(path)
    } else {
        None
    };
    Ok(SingleRun {
        records,
        info: RunInfo {
            algorithm,
            seed,
            steps: outcome.steps,
            checkpoint,
            error: None,
        },
    })
}

pub(crate) fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Trains every (seed, algorithm) of `config`, up to `jobs` at a time, and
/// writes `metrics.csv`, `summary.json`, PCA files and checkpoints under
/// `config.output_dir`.
pub fn run(config: &ExperimentConfig, jobs: usize) -> Result<RunOutput> {
    let exp = Experiment::new(config.clone())?;
    let out = config.output_dir.clone();
    fs::create_dir_all(&out)?;
    let marker = out.join(INCOMPLETE_MARKER);
    fs::write(&marker, "runs in progress\n")?;
    write_json(&out.join("config.json"), config)?;

    let tasks: Vec<(u64, Algorithm)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.algorithms.iter().map(move |&a| (s, a)))
        .collect();
    let pool = thread_pool(jobs)?;
    let results: Vec<Result<SingleRun>> =
        pool.install(|| tasks.par_iter().map(|&(s, a)| run_single(&exp, a, s, &out)).collect());

    let mut records = Vec::new();
    let mut runs = Vec::new();
    let mut first_error = None;
    for ((seed, algorithm), result) in tasks.iter().zip(results) {
        match result {
            Ok(single) => {
                records.extend(single.records);
                runs.push(single.info);
            }
            Err(e) => {
                runs.push(RunInfo {
                    algorithm: *algorithm,
                    seed: *seed,
                    steps: 0,
                    checkpoint: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let summary = RunSummary {
        complete: first_error.is_none(),
        config: config.clone(),
        runs,
        algorithms: summarize(&records),
    };
    write_metrics(BufWriter::new(fs::File::create(out.join("metrics.csv"))?), &records)?;
    write_json(&out.join("summary.json"), &summary)?;
    match first_error {
        Some(e) => {
            fs::write(&marker, format!("failed runs: {e}\n"))?;
            Err(e)
        }
        None => {
            fs::remove_file(&marker)?;
            Ok(RunOutput { records, summary })
        }
    }
}
