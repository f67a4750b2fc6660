//! Synthetic parallel semantic-parsing corpora.
//!
//! A template is an intent plus an ordered list of distinct relations, each
//! relation binding one entity slot. A pair is a template with its slots
//! bound; its logical form is `intent rel_1 ENT_1 .. rel_n ENT_n`, shared by
//! every language. The English utterance is the intent phrase followed by
//! one `relation-word entity` chunk per slot. Other languages are derived
//! from English by a [`LanguageSpec`]: a token bijection, a chunk
//! reordering, optional postpositions and an optional suffix morpheme.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Example;
use crate::error::{Error, Result};
use crate::models::{BOS, EOS, PAD};
use crate::rng::Stream;

const INTENTS: &[(&str, &[&str])] = &[
    ("flight", &["show", "me", "flights"]),
    ("fare", &["what", "is", "the", "fare"]),
    ("airline", &["which", "airlines", "fly"]),
    ("ground", &["list", "ground", "transport"]),
    ("departure", &["when", "do", "flights", "leave"]),
    ("count", &["how", "many", "flights"]),
    ("meal", &["which", "meals", "are", "served"]),
    ("aircraft", &["what", "planes", "are", "used"]),
];

/// `(logical-form token, English word, slot type)`.
const RELATIONS: &[(&str, &str, usize)] = &[
    ("from", "from", 0),
    ("to", "to", 0),
    ("via", "through", 0),
    ("day", "on", 1),
    ("carrier", "with", 2),
    ("period", "during", 3),
];

const SLOT_TYPES: &[&str] = &["city", "weekday", "airline", "daypart"];

/// How a language renders source tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Lexicon {
    /// Same surface tokens as English.
    Identity,
    /// A permutation of the English word tokens among themselves.
    Permuted { seed: u64 },
    /// Fresh language-specific tokens, bijectively assigned.
    Disjoint { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChunkOrder {
    Identity,
    Reversed,
    /// One fixed random permutation per chunk count.
    Shuffled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSpec {
    pub tag: String,
    pub lexicon: Lexicon,
    /// Whether entity names go through the lexicon (otherwise shared).
    #[serde(default)]
    pub translate_entities: bool,
    pub order: ChunkOrder,
    /// Relation word after the entity instead of before.
    #[serde(default)]
    pub postpositions: bool,
    /// Probability that a (non-entity) word carries the language's suffix.
    #[serde(default)]
    pub p_suffix: f64,
}

impl LanguageSpec {
    pub fn identity(tag: &str) -> Self {
        Self {
            tag: tag.into(),
            lexicon: Lexicon::Identity,
            translate_entities: false,
            order: ChunkOrder::Identity,
            postpositions: false,
            p_suffix: 0.0,
        }
    }

    /// English plus five targets of increasing distance.
    pub fn default_set() -> Vec<Self> {
        let lang = |tag: &str, seed: u64, order, post, suffix, ents| Self {
            tag: tag.into(),
            lexicon: Lexicon::Disjoint { seed },
            translate_entities: ents,
            order,
            postpositions: post,
            p_suffix: suffix,
        };
        vec![
            Self::identity("en"),
            lang("fr", 11, ChunkOrder::Identity, false, 0.0, false),
            lang("pt", 12, ChunkOrder::Identity, false, 0.2, false),
            lang("es", 13, ChunkOrder::Shuffled { seed: 13 }, false, 0.0, false),
            lang("de", 14, ChunkOrder::Reversed, true, 0.3, false),
            lang("zh", 15, ChunkOrder::Shuffled { seed: 15 }, true, 0.0, true),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.tag.is_empty() {
            return Err(Error::Config("language tag must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&self.p_suffix) {
            return Err(Error::Config(format!(
                "{}: p_suffix {} outside [0, 1]",
                self.tag, self.p_suffix
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub num_templates: usize,
    pub entities_per_slot: usize,
    pub num_pairs: usize,
    /// First entry is the support language.
    pub languages: Vec<LanguageSpec>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            num_templates: 12,
            entities_per_slot: 30,
            num_pairs: 2000,
            languages: LanguageSpec::default_set(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub intent: usize,
    pub relations: Vec<usize>,
}

/// Token string tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub input: Vec<String>,
    pub output: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub languages: Vec<String>,
    pub templates: Vec<Template>,
    /// Ordered by pair id, then by language (in `languages` order).
    pub examples: Vec<Example>,
    pub vocab: Vocabulary,
}

impl Corpus {
    pub fn support_language(&self) -> &str {
        &self.languages[0]
    }

    pub fn target_languages(&self) -> &[String] {
        &self.languages[1..]
    }

    pub fn num_pairs(&self) -> usize {
        self.examples.len() / self.languages.len()
    }

    /// The realization of `pair_id` in the language at `lang_index`.
    pub fn example(&self, pair_id: usize, lang_index: usize) -> &Example {
        &self.examples[pair_id * self.languages.len() + lang_index]
    }

    pub fn language_index(&self, tag: &str) -> Option<usize> {
        self.languages.iter().position(|l| l == tag)
    }

    pub fn decode_input(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.vocab.input[i].as_str()).collect()
    }

    pub fn decode_output(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.vocab.output[i].as_str()).collect()
    }

    /// One JSON object per line: `{pair_id, language, utterance, logical_form}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for ex in &self.examples {
            serde_json::to_writer(&mut w, ex)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Source-language word inventory (intent words, relation words).
fn source_words() -> Vec<&'static str> {
    let mut words = Vec::new();
    let mut seen = HashSet::new();
    let all = INTENTS
        .iter()
        .flat_map(|(_, ws)| ws.iter().copied())
        .chain(RELATIONS.iter().map(|r| r.1));
    for w in all {
        if seen.insert(w) {
            words.push(w);
        }
    }
    words
}

fn entity_name(slot: usize, index: usize) -> String {
    format!("{}{:02}", SLOT_TYPES[slot], index)
}

/// Per-language source-token -> surface-token map.
struct Realizer<'a> {
    spec: &'a LanguageSpec,
    map: HashMap<String, String>,
}

impl<'a> Realizer<'a> {
    fn new(spec: &'a LanguageSpec, words: &[&str], entities: &[String]) -> Self {
        let mut map = HashMap::new();
        let mut bind = |sources: Vec<String>, seed: u64, label: &str, prefix: &str| {
            let mut targets: Vec<usize> = (0..sources.len()).collect();
            Stream::new(seed, label).shuffle(&mut targets);
            for (i, src) in sources.iter().enumerate() {
                let surf = match &spec.lexicon {
                    Lexicon::Identity => src.clone(),
                    Lexicon::Permuted { .. } => sources[targets[i]].clone(),
                    Lexicon::Disjoint { .. } => format!("{}:{}{}", spec.tag, prefix, targets[i]),
                };
                map.insert(src.clone(), surf);
            }
        };
        let seed = match spec.lexicon {
            Lexicon::Identity => 0,
            Lexicon::Permuted { seed } | Lexicon::Disjoint { seed } => seed,
        };
        bind(
            words.iter().map(|w| w.to_string()).collect(),
            seed,
            "lexicon-words",
            "w",
        );
        if spec.translate_entities {
            // Permute within each slot type so types stay distinguishable.
            for slot in 0..SLOT_TYPES.len() {
                let group: Vec<String> = entities
                    .iter()
                    .filter(|e| e.starts_with(SLOT_TYPES[slot]))
                    .cloned()
                    .collect();
                bind(group, seed ^ (slot as u64 + 1), "lexicon-entities", SLOT_TYPES[slot]);
            }
        }
        Self { spec, map }
    }

    fn surface(&self, src: &str) -> String {
        self.map.get(src).cloned().unwrap_or_else(|| src.to_string())
    }

    fn chunk_order(&self, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        match &self.spec.order {
            ChunkOrder::Identity => {}
            ChunkOrder::Reversed => order.reverse(),
            ChunkOrder::Shuffled { seed } => {
                Stream::new(*seed, "chunk-order").derive_index("chunks", n as u64).shuffle(&mut order);
            }
        }
        order
    }

    /// Utterance strings for one bound template.
    fn realize(&self, intent: &[&str], chunks: &[(&str, String)], rng: &mut Stream) -> Vec<String> {
        let mut parts: Vec<Vec<(String, bool)>> = Vec::with_capacity(chunks.len() + 1);
        parts.push(intent.iter().map(|w| (self.surface(w), false)).collect());
        for (rel, ent) in chunks {
            let rel = (self.surface(rel), false);
            let ent = (self.surface(ent), true);
            parts.push(if self.spec.postpositions {
                vec![ent, rel]
            } else {
                vec![rel, ent]
            });
        }
        let order = self.chunk_order(parts.len());
        let mut out = Vec::new();
        for i in order {
            for (tok, is_entity) in &parts[i] {
                // Draw for every word so the stream does not depend on p.
                let u = rng.unit();
                if !is_entity && u < self.spec.p_suffix {
                    out.push(format!("{tok}+{}", self.spec.tag));
                } else {
                    out.push(tok.clone());
                }
            }
        }
        out
    }
}

fn choose_templates(num_templates: usize, rng: &mut Stream) -> Result<Vec<Template>> {
    // Candidate pool: every intent with 1..=3 distinct relations in
    // canonical order, excluding the same relation twice.
    let mut pool = Vec::new();
    let r = RELATIONS.len();
    for intent in 0..INTENTS.len() {
        for a in 0..r {
            pool.push(Template {
                intent,
                relations: vec![a],
            });
            for b in 0..r {
                if b == a {
                    continue;
                }
                pool.push(Template {
                    intent,
                    relations: vec![a, b],
                });
                for c in 0..r {
                    if c == a || c == b {
                        continue;
                    }
                    pool.push(Template {
                        intent,
                        relations: vec![a, b, c],
                    });
                }
            }
        }
    }
    if num_templates == 0 || num_templates > pool.len() {
        return Err(Error::Corpus(format!(
            "num_templates must be in 1..={}",
            pool.len()
        )));
    }
    // Prefer two-slot templates, then fill round-robin across intents.
    rng.shuffle(&mut pool);
    pool.sort_by_key(|t| match t.relations.len() {
        2 => 0,
        3 => 1,
        _ => 2,
    });
    let mut chosen: Vec<Template> = Vec::with_capacity(num_templates);
    let mut used_intents = vec![0usize; INTENTS.len()];
    while chosen.len() < num_templates {
        let min_use = *used_intents.iter().min().expect("intents");
        let pick = pool
            .iter()
            .position(|t| used_intents[t.intent] == min_use)
            .expect("pool larger than request");
        let t = pool.remove(pick);
        used_intents[t.intent] += 1;
        chosen.push(t);
    }
    Ok(chosen)
}

/// Generates `config.num_pairs` distinct pairs realized in every language.
pub fn generate_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus> {
    if config.num_pairs == 0 {
        return Err(Error::Corpus("num_pairs must be at least 1".into()));
    }
    if config.languages.len() < 2 {
        return Err(Error::Corpus(
            "need a support language and at least one target".into(),
        ));
    }
    if config.entities_per_slot == 0 {
        return Err(Error::Corpus("entities_per_slot must be at least 1".into()));
    }
    let mut tags = HashSet::new();
    for l in &config.languages {
        l.validate()?;
        if !tags.insert(l.tag.as_str()) {
            return Err(Error::Corpus(format!("duplicate language {}", l.tag)));
        }
    }

    let root = Stream::new(seed, "corpus");
    let templates = choose_templates(config.num_templates, &mut root.derive("templates"))?;
    let e = config.entities_per_slot as u128;
    let capacity: u128 = templates
        .iter()
        .map(|t| e.saturating_pow(t.relations.len() as u32))
        .sum();
    if capacity < config.num_pairs as u128 {
        return Err(Error::Corpus(format!(
            "{} templates with {} entities per slot yield only {} distinct pairs, {} requested",
            templates.len(),
            config.entities_per_slot,
            capacity,
            config.num_pairs
        )));
    }

    // Draw distinct bindings; rejection is cheap while the request stays
    // well below capacity, otherwise enumerate and shuffle.
    let mut bindings: Vec<(usize, Vec<usize>)> = Vec::with_capacity(config.num_pairs);
    let mut rng = root.derive("bindings");
    if capacity >= 4 * config.num_pairs as u128 {
        let mut seen = HashSet::new();
        while bindings.len() < config.num_pairs {
            let t = rng.below(templates.len());
            let ents: Vec<usize> = templates[t]
                .relations
                .iter()
                .map(|_| rng.below(config.entities_per_slot))
                .collect();
            if seen.insert((t, ents.clone())) {
                bindings.push((t, ents));
            }
        }
    } else {
        let mut all = Vec::new();
        for (t, tpl) in templates.iter().enumerate() {
            let n = tpl.relations.len() as u32;
            for code in 0..config.entities_per_slot.pow(n) {
                let mut c = code;
                let ents = (0..n)
                    .map(|_| {
                        let v = c % config.entities_per_slot;
                        c /= config.entities_per_slot;
                        v
                    })
                    .collect();
                all.push((t, ents));
            }
        }
        rng.shuffle(&mut all);
        all.truncate(config.num_pairs);
        bindings = all;
    }

    // Output vocabulary.
    let mut output: Vec<String> = vec!["<pad>".into(), "<s>".into(), "</s>".into()];
    debug_assert_eq!((PAD, BOS, EOS), (0, 1, 2));
    let intent_base = output.len();
    output.extend(INTENTS.iter().map(|(lf, _)| lf.to_string()));
    let rel_base = output.len();
    output.extend(RELATIONS.iter().map(|(lf, _, _)| lf.to_string()));
    let ent_base = output.len();
    for slot in 0..SLOT_TYPES.len() {
        for i in 0..config.entities_per_slot {
            output.push(entity_name(slot, i).to_uppercase());
        }
    }
    let ent_out = |slot: usize, i: usize| ent_base + slot * config.entities_per_slot + i;

    let words = source_words();
    let entities: Vec<String> = (0..SLOT_TYPES.len())
        .flat_map(|s| (0..config.entities_per_slot).map(move |i| entity_name(s, i)))
        .collect();
    let realizers: Vec<Realizer> = config
        .languages
        .iter()
        .map(|spec| Realizer::new(spec, &words, &entities))
        .collect();

    let mut input: Vec<String> = vec!["<pad>".into()];
    let mut input_ids: HashMap<String, usize> = HashMap::new();
    input_ids.insert("<pad>".into(), PAD);
    let mut examples = Vec::with_capacity(bindings.len() * realizers.len());
    let suffix_root = root.derive("suffix");
    for (pair_id, (t, ents)) in bindings.iter().enumerate() {
        let tpl = &templates[*t];
        let mut lf = vec![intent_base + tpl.intent];
        let mut chunks = Vec::with_capacity(ents.len());
        for (&rel, &ent) in tpl.relations.iter().zip(ents) {
            let (_, word, slot) = RELATIONS[rel];
            lf.push(rel_base + rel);
            lf.push(ent_out(slot, ent));
            chunks.push((word, entity_name(slot, ent)));
        }
        for (li, realizer) in realizers.iter().enumerate() {
            let mut rng = suffix_root.derive_index(&realizer.spec.tag, pair_id as u64);
            let tokens = realizer.realize(INTENTS[tpl.intent].1, &chunks, &mut rng);
            let utterance = tokens
                .into_iter()
                .map(|tok| {
                    *input_ids.entry(tok.clone()).or_insert_with(|| {
                        input.push(tok);
                        input.len() - 1
                    })
                })
                .collect();
            examples.push(Example {
                pair_id,
                language: config.languages[li].tag.clone(),
                utterance,
                logical_form: lf.clone(),
                context: Vec::new(),
            });
        }
    }

    Ok(Corpus {
        languages: config.languages.iter().map(|l| l.tag.clone()).collect(),
        templates,
        examples,
        vocab: Vocabulary { input, output },
    })
}

/// Per-language token counts, for diagnostics.
pub fn token_counts(corpus: &Corpus) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for ex in &corpus.examples {
        *counts.entry(ex.language.clone()).or_insert(0) += ex.utterance.len();
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(languages: Vec<LanguageSpec>) -> CorpusConfig {
        CorpusConfig {
            num_templates: 1,
            entities_per_slot: 1,
            num_pairs: 1,
            languages,
        }
    }

    #[test]
    fn minimal_corpus() {
        let mut fr = LanguageSpec::identity("fr");
        fr.lexicon = Lexicon::Disjoint { seed: 1 };
        let c = generate_corpus(&tiny(vec![LanguageSpec::identity("en"), fr]), 0).unwrap();
        assert_eq!(c.examples.len(), 2);
        assert_eq!(c.examples[0].logical_form, c.examples[1].logical_form);
        assert_ne!(c.examples[0].utterance, c.examples[1].utterance);
    }

    #[test]
    fn identity_language_copies_english() {
        let langs = vec![LanguageSpec::identity("en"), LanguageSpec::identity("xx")];
        let cfg = CorpusConfig {
            num_pairs: 50,
            num_templates: 4,
            entities_per_slot: 5,
            languages: langs,
        };
        let c = generate_corpus(&cfg, 9).unwrap();
        for p in 0..c.num_pairs() {
            assert_eq!(c.example(p, 0).utterance, c.example(p, 1).utterance);
        }
    }

    #[test]
    fn too_small_pool_is_an_error() {
        let mut cfg = tiny(vec![LanguageSpec::identity("en"), LanguageSpec::identity("fr")]);
        cfg.num_pairs = 2;
        let err = generate_corpus(&cfg, 0).unwrap_err();
        assert!(matches!(err, Error::Corpus(_)), "{err}");
    }

    #[test]
    fn rejects_single_language_and_duplicates() {
        assert!(generate_corpus(&tiny(vec![LanguageSpec::identity("en")]), 0).is_err());
        let dup = vec![LanguageSpec::identity("en"), LanguageSpec::identity("en")];
        assert!(generate_corpus(&tiny(dup), 0).is_err());
    }

    #[test]
    fn exhaustive_draw_near_capacity() {
        let cfg = CorpusConfig {
            num_templates: 2,
            entities_per_slot: 3,
            num_pairs: 18,
            languages: vec![LanguageSpec::identity("en"), LanguageSpec::identity("fr")],
        };
        // Two two-slot templates: 9 + 9 bindings.
        let c = generate_corpus(&cfg, 4).unwrap();
        let lfs: HashSet<_> = c.examples.iter().map(|e| e.logical_form.clone()).collect();
        assert_eq!(lfs.len(), 18);
    }

    #[test]
    fn permuted_lexicon_stays_in_english_vocabulary() {
        let mut xx = LanguageSpec::identity("xx");
        xx.lexicon = Lexicon::Permuted { seed: 5 };
        let cfg = CorpusConfig {
            num_pairs: 40,
            num_templates: 4,
            entities_per_slot: 4,
            languages: vec![LanguageSpec::identity("en"), xx],
        };
        let c = generate_corpus(&cfg, 1).unwrap();
        let en: HashSet<usize> = c
            .examples
            .iter()
            .filter(|e| e.language == "en")
            .flat_map(|e| e.utterance.clone())
            .collect();
        let words = source_words().len();
        let inside = c
            .examples
            .iter()
            .filter(|e| e.language == "xx")
            .flat_map(|e| e.utterance.clone())
            .filter(|t| en.contains(t))
            .count();
        assert!(inside > 0 && words > 0);
    }

    #[test]
    fn suffix_and_postpositions_render() {
        let mut de = LanguageSpec::identity("de");
        de.postpositions = true;
        de.p_suffix = 1.0;
        let cfg = CorpusConfig {
            num_pairs: 5,
            num_templates: 2,
            entities_per_slot: 3,
            languages: vec![LanguageSpec::identity("en"), de],
        };
        let c = generate_corpus(&cfg, 2).unwrap();
        let de_tokens = c.decode_input(&c.example(0, 1).utterance);
        let suffixed = de_tokens.iter().filter(|t| t.ends_with("+de")).count();
        let entity_count = c.example(0, 0).logical_form.len() / 2;
        assert_eq!(suffixed, de_tokens.len() - entity_count);
    }
}
