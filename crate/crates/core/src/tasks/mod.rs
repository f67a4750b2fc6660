//! Synthetic tasks: parallel semantic-parsing corpora, sampling regimes,
//! batch streams and a sinusoid regression family.

mod batch;
mod corpus;
mod example;
mod sinusoid;
mod split;

pub use batch::BatchStream;
pub use corpus::{
    generate_corpus, token_counts, ChunkOrder, Corpus, CorpusConfig, LanguageSpec, Lexicon, Template,
    Vocabulary,
};
pub use example::{Example, Point};
pub use sinusoid::{sinusoid_family, SinusoidTask};
pub use split::{split_sample, SampleSplit, SplitConfig, Strategy};
