#![allow(dead_code)]

use std::sync::OnceLock;

use xgreptile::meta::{EpisodeConfig, OptimizerKind};
use xgreptile::models::{Seq2SeqParser, Seq2SeqParserSpec};
use xgreptile::tasks::{generate_corpus, Corpus, CorpusConfig, Example};

/// Default languages on a corpus small enough for quick tests.
pub fn small_corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let config = CorpusConfig {
            num_pairs: 400,
            ..CorpusConfig::default()
        };
        generate_corpus(&config, 7).unwrap()
    })
}

pub fn tiny_parser(corpus: &Corpus) -> Seq2SeqParser {
    let mut spec = Seq2SeqParserSpec::new(corpus.vocab.input.len(), corpus.vocab.output.len());
    spec.embed_dim = 6;
    spec.hidden_dim = 8;
    spec.max_decode_len = 20;
    Seq2SeqParser::new(spec).unwrap()
}

pub fn sgd_episode(k: usize, alpha: f64, beta: f64, lambda: Option<f64>) -> EpisodeConfig {
    EpisodeConfig {
        k,
        inner_lr: alpha,
        outer_lr: beta,
        target_weight: lambda,
        inner_optimizer: OptimizerKind::Sgd,
        outer_optimizer: OptimizerKind::Sgd,
        batch_size: 4,
    }
}

/// `count` consecutive batches of `size` examples starting at `offset`,
/// wrapping around `pool`.
pub fn batches(pool: &[Example], offset: usize, count: usize, size: usize) -> Vec<Vec<Example>> {
    (0..count)
        .map(|b| {
            (0..size)
                .map(|i| pool[(offset + b * size + i) % pool.len()].clone())
                .collect()
        })
        .collect()
}
