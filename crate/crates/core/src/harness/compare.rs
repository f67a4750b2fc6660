use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::records::{summarize_rows, AlgorithmSummary, MetricsRecord};
use crate::error::{Error, Result};

/// Test rows of one algorithm from one results file.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultSet {
    pub label: String,
    pub records: Vec<MetricsRecord>,
}

impl ResultSet {
    fn seeds(&self) -> BTreeSet<u64> {
        self.records.iter().map(|r| r.seed).collect()
    }

    fn languages(&self) -> BTreeSet<(String, String)> {
        self.records.iter().map(|r| (r.language.clone(), r.role.clone())).collect()
    }
}

/// Splits each named metrics table into one set per algorithm. Labels are
/// algorithm names, prefixed with the table name when an algorithm occurs
/// in more than one table.
pub fn result_sets(tables: &[(String, Vec<MetricsRecord>)]) -> Vec<ResultSet> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut grouped: Vec<(String, String, Vec<MetricsRecord>)> = Vec::new();
    for (name, rows) in tables {
        let mut by_alg: BTreeMap<String, Vec<MetricsRecord>> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.is_test()) {
            by_alg.entry(r.algorithm.to_string()).or_default().push(r.clone());
        }
        for (alg, rows) in by_alg {
            *counts.entry(alg.clone()).or_default() += 1;
            grouped.push((name.clone(), alg, rows));
        }
    }
    let mut used: BTreeMap<String, usize> = BTreeMap::new();
    grouped
        .into_iter()
        .map(|(name, alg, records)| {
            let mut label = if counts[&alg] > 1 { format!("{name}:{alg}") } else { alg };
            let n = used.entry(label.clone()).or_default();
            *n += 1;
            if *n > 1 {
                label = format!("{label}#{n}");
            }
            ResultSet { label, records }
        })
        .collect()
}

/// A declared ordering `a > b > ...` of target-average exact match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis(pub Vec<String>);

impl FromStr for Hypothesis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<String> = s.split('>').map(|p| p.trim().to_string()).collect();
        if parts.len() < 2 || parts.iter().any(String::is_empty) {
            return Err(Error::Config(format!("ordering {s:?} must look like a>b[>c...]")));
        }
        Ok(Hypothesis(parts))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetReport {
    pub summary: AlgorithmSummary,
    /// Only one seed: standard deviations are reported as 0.
    pub single_seed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pairwise {
    pub a: String,
    pub b: String,
    /// Mean over seeds of `a - b` target-average exact match.
    pub mean_difference: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// Mean `a - b` exact match per language.
    pub per_language: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub ordering: Vec<String>,
    /// Seed-mean target averages strictly decrease along the ordering.
    pub passed: bool,
    pub seeds_holding: usize,
    pub seeds: usize,
    /// Whether the ordering holds for each language's seed-mean exact match.
    pub per_language: BTreeMap<String, bool>,
}

impl Verdict {
    pub fn line(&self) -> String {
        format!(
            "{} ordering {} (holds in {}/{} seeds)",
            if self.passed { "PASS" } else { "FAIL" },
            self.ordering.join(" > "),
            self.seeds_holding,
            self.seeds
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub sets: BTreeMap<String, SetReport>,
    pub pairwise: Vec<Pairwise>,
    pub verdicts: Vec<Verdict>,
}

pub fn compare(sets: &[ResultSet], hypotheses: &[Hypothesis]) -> Result<CompareReport> {
    if sets.len() < 2 {
        return Err(Error::Config("compare needs at least two result sets".into()));
    }
    let (seeds, languages) = (sets[0].seeds(), sets[0].languages());
    for s in &sets[1..] {
        if s.seeds() != seeds || s.languages() != languages {
            return Err(Error::Config(format!(
                "{} and {} were evaluated on different seeds or languages",
                sets[0].label, s.label
            )));
        }
    }
    let reports: BTreeMap<String, SetReport> = sets
        .iter()
        .map(|s| {
            let rows: Vec<&MetricsRecord> = s.records.iter().collect();
            (
                s.label.clone(),
                SetReport {
                    summary: summarize_rows(&rows),
                    single_seed: seeds.len() == 1,
                },
            )
        })
        .collect();

    let diff_stats = |a: &AlgorithmSummary, b: &AlgorithmSummary| {
        let (mut wins, mut losses, mut ties, mut total) = (0, 0, 0, 0.0);
        for (seed, va) in &a.target_average_by_seed {
            let vb = b.target_average_by_seed[seed];
            total += va - vb;
            match va.partial_cmp(&vb) {
                Some(std::cmp::Ordering::Greater) => wins += 1,
                Some(std::cmp::Ordering::Less) => losses += 1,
                _ => ties += 1,
            }
        }
        (total / a.target_average_by_seed.len().max(1) as f64, wins, losses, ties)
    };

    let mut pairwise = Vec::new();
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            let (sa, sb) = (&reports[&a.label].summary, &reports[&b.label].summary);
            let (mean_difference, wins, losses, ties) = diff_stats(sa, sb);
            pairwise.push(Pairwise {
                a: a.label.clone(),
                b: b.label.clone(),
                mean_difference,
                wins,
                losses,
                ties,
                per_language: sa
                    .languages
                    .iter()
                    .map(|(l, m)| (l.clone(), m.mean - sb.languages[l].mean))
                    .collect(),
            });
        }
    }

    let mut verdicts = Vec::new();
    for h in hypotheses {
        let chain: Vec<&AlgorithmSummary> = h
            .0
            .iter()
            .map(|l| {
                reports
                    .get(l)
                    .map(|r| &r.summary)
                    .ok_or_else(|| Error::Config(format!("no result set named {l:?}")))
            })
            .collect::<Result<_>>()?;
        let decreasing = |vals: Vec<f64>| vals.windows(2).all(|w| w[0] > w[1]);
        let passed = decreasing(chain.iter().map(|s| s.target_average.mean).collect());
        let seeds_holding = seeds
            .iter()
            .filter(|seed| decreasing(chain.iter().map(|s| s.target_average_by_seed[seed]).collect()))
            .count();
        let per_language = chain[0]
            .languages
            .keys()
            .filter(|l| languages.contains(&((*l).clone(), "target".to_string())))
            .map(|l| (l.clone(), decreasing(chain.iter().map(|s| s.languages[l].mean).collect())))
            .collect();
        verdicts.push(Verdict {
            ordering: h.0.clone(),
            passed,
            seeds_holding,
            seeds: seeds.len(),
            per_language,
        });
    }
    Ok(CompareReport {
        sets: reports,
        pairwise,
        verdicts,
    })
}

impl CompareReport {
    /// Human-readable report, one line per fact.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (label, r) in &self.sets {
            let t = &r.summary.target_average;
            out.push(format!(
                "{label}: target average {:.4} +- {:.4} over {} seeds{}",
                t.mean,
                t.std,
                t.n,
                if r.single_seed { " (warning: single seed, stddev reported as 0)" } else { "" }
            ));
            for (lang, m) in &r.summary.languages {
                out.push(format!("  {lang}: {:.4} +- {:.4}", m.mean, m.std));
            }
        }
        for p in &self.pairwise {
            out.push(format!(
                "{} vs {}: mean difference {:+.4}, wins {} losses {} ties {}",
                p.a, p.b, p.mean_difference, p.wins, p.losses, p.ties
            ));
        }
        out.extend(self.verdicts.iter().map(Verdict::line));
        out
    }
}
