use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{Algorithm, EpisodeConfig, TrainConfig};
use crate::models::Seq2SeqParserSpec;
use crate::tasks::{CorpusConfig, SplitConfig, Strategy, Vocabulary};

/// Parser sizes; vocabulary sizes come from the generated corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub max_decode_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let spec = Seq2SeqParserSpec::new(1, 3);
        Self {
            embed_dim: spec.embed_dim,
            hidden_dim: spec.hidden_dim,
            max_decode_len: spec.max_decode_len,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, vocab: &Vocabulary) -> Seq2SeqParserSpec {
        Seq2SeqParserSpec {
            input_vocab_size: vocab.input.len(),
            output_vocab_size: vocab.output.len(),
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            max_decode_len: self.max_decode_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    /// The corpus is shared by all seeds; splits and initialisation follow
    /// the run seed.
    pub corpus_seed: u64,
    pub split: SplitConfig,
    pub algorithms: Vec<Algorithm>,
    pub model: ModelConfig,
    pub episode: EpisodeConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Principal components written per language.
    pub pca_dims: usize,
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusConfig::default(),
            corpus_seed: 0,
            split: SplitConfig::new(Strategy::Subtractive, 0.10),
            algorithms: vec![Algorithm::XgReptile],
            model: ModelConfig::default(),
            episode: EpisodeConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0],
            output_dir: PathBuf::from("results"),
            pca_dims: 2,
            save_checkpoints: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.corpus.languages.len() < 2 {
            return Err(Error::Config("need a support language and at least one target".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be nonempty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.pca_dims == 0 {
            return Err(Error::Config("pca_dims must be at least 1".into()));
        }
        self.split.validate(self.corpus.languages.len() - 1)?;
        self.episode.validate()?;
        self.train.validate()?;
        let probe = Seq2SeqParserSpec {
            input_vocab_size: 1,
            output_vocab_size: 3,
            embed_dim: self.model.embed_dim,
            hidden_dim: self.model.hidden_dim,
            max_decode_len: self.model.max_decode_len,
        };
        probe.validate()
    }
}
