use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use xgreptile::grad_analysis::VerifyConfig;
use xgreptile::harness::{
    analyze, compare, gradient_report, load_metrics, result_sets, run, sweep, Axis, ExperimentConfig, Hypothesis,
};

#[derive(Parser)]
#[command(name = "xgreptile", version, about = "Cross-lingual Reptile experiments on synthetic parsing tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configured seeds (repeatable).
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Replaces the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if !self.seeds.is_empty() {
            cfg.seeds = self.seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every configured algorithm and seed.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// One run per value of a hyperparameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// k, rate or batch_size.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Finite-difference and Taylor-expansion checks; writes gradcheck_report.json.
    VerifyGradients {
        /// JSON verification settings; omitted fields take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seeds for the model gradient checks.
        #[arg(long, default_value_t = 20)]
        model_seeds: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        print_config: bool,
    },
    /// PCA and similarity analysis of a saved checkpoint.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare algorithms across metrics.csv files.
    Compare {
        /// metrics.csv or sweep.csv files.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Ordering to test, e.g. "xg_reptile>joint" (repeatable).
        #[arg(long = "hypothesis")]
        hypotheses: Vec<Hypothesis>,
        /// Directory for compare_report.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { common } => {
            let cfg = common.experiment()?;
            if common.print_config {
                print_json(&cfg)?;
                return Ok(true);
            }
            let out = run(&cfg, common.jobs)?;
            for (alg, s) in &out.summary.algorithms {
                println!(
                    "{alg}: target exact match {:.4} +- {:.4}",
                    s.target_average.mean, s.target_average.std
                );
            }
            println!("wrote {}", cfg.output_dir.join("metrics.csv").display());
            Ok(true)
        }
        Command::Sweep { common, axis, values } => {
            let cfg = common.experiment()?;
            if common.print_config {
                print_json(&cfg)?;
                return Ok(true);
            }
            let out = sweep(&cfg, axis, &values, common.jobs)?;
            for p in &out.summary.points {
                match &p.error {
                    Some(e) => println!("{axis}={}: failed: {e}", p.value),
                    None => {
                        for (alg, m) in &p.target_average {
                            println!("{axis}={} {alg}: {:.4} +- {:.4}", p.value, m.mean, m.std);
                        }
                    }
                }
            }
            let clean = out.summary.failures().next().is_none();
            Ok(clean)
        }
        Command::VerifyGradients {
            config,
            model_seeds,
            out,
            print_config,
        } => {
            let cfg = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<VerifyConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => VerifyConfig::default(),
            };
            if print_config {
                print_json(&cfg)?;
                return Ok(true);
            }
            let report = gradient_report(&cfg, model_seeds)?;
            for m in &report.models {
                println!(
                    "{} {} grad check: max error {:.3e} over {} seeds",
                    if m.passed { "PASS" } else { "FAIL" },
                    m.model,
                    m.max_error,
                    m.seeds
                );
            }
            for c in &report.analysis.checks {
                println!(
                    "{} {} d={} K={}: {:.3e}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.identity,
                    c.dim,
                    c.k,
                    c.value
                );
            }
            std::fs::create_dir_all(&out)?;
            write_json(&out.join("gradcheck_report.json"), &report)?;
            Ok(report.passed)
        }
        Command::Analyze { common, checkpoint } => {
            let cfg = common.experiment()?;
            if common.print_config {
                print_json(&cfg)?;
                return Ok(true);
            }
            let seed = match cfg.seeds.as_slice() {
                [s] => *s,
                _ => bail!("analyze needs exactly one seed (use --seed)"),
            };
            let report = analyze(&cfg, &checkpoint, seed, &cfg.output_dir)?;
            for (lang, a) in &report.languages {
                println!(
                    "{lang}: exact match {:.4}, cosine to {} {:.4}, hausdorff {:.4}",
                    a.exact_match, report.support_language, a.mean_cosine, a.hausdorff
                );
            }
            Ok(true)
        }
        Command::Compare {
            metrics,
            hypotheses,
            out,
        } => {
            let tables = metrics
                .iter()
                .map(|p| {
                    let name = p
                        .parent()
                        .and_then(|d| d.file_name())
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_else(|| p.display().to_string());
                    Ok((name, load_metrics(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let report = compare(&result_sets(&tables), &hypotheses)?;
            for line in report.lines() {
                println!("{line}");
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join("compare_report.json"), &report)?;
            }
            Ok(report.verdicts.iter().all(|v| v.passed))
        }
    }
}
