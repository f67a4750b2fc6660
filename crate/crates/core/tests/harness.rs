use std::fs;
use std::path::Path;

use xgreptile::harness::{
    analyze, compare, load_metrics, result_sets, run, sweep, Axis, ExperimentConfig, Hypothesis, ModelConfig,
    INCOMPLETE_MARKER,
};
use xgreptile::meta::{Algorithm, TrainConfig};
use xgreptile::models::load_checkpoint;
use xgreptile::tasks::{CorpusConfig, LanguageSpec};

fn tiny_config(out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig {
        corpus: CorpusConfig {
            num_pairs: 80,
            languages: LanguageSpec::default_set().into_iter().take(3).collect(),
            ..CorpusConfig::default()
        },
        algorithms: Algorithm::ALL.to_vec(),
        model: ModelConfig {
            embed_dim: 6,
            hidden_dim: 8,
            max_decode_len: 12,
        },
        train: TrainConfig {
            max_steps: 6,
            eval_interval: 3,
            validation_limit: Some(5),
            ..TrainConfig::default()
        },
        seeds: vec![0, 1],
        output_dir: out.to_path_buf(),
        ..ExperimentConfig::default()
    };
    config.episode.k = 2;
    config.episode.batch_size = 4;
    config
}

fn csv_without_wall_clock(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "wall_clock_seconds").unwrap();
    text.lines()
        .map(|line| {
            let mut cells: Vec<&str> = line.split(',').collect();
            cells.remove(col);
            cells.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = run(&config, 2).unwrap();
    assert!(out.summary.complete);
    assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
    for file in ["metrics.csv", "summary.json", "config.json"] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    assert_eq!(ExperimentConfig::load(&dir.path().join("config.json")).unwrap(), config);

    let records = load_metrics(&dir.path().join("metrics.csv")).unwrap();
    assert_eq!(records, out.records);
    let tests: Vec<_> = records.iter().filter(|r| r.is_test()).collect();
    assert_eq!(tests.len(), 4 * 2 * 3);
    for r in &tests {
        let em = r.exact_match.unwrap();
        assert!((0.0..=1.0).contains(&em));
        assert!(r.wall_clock_seconds.is_some());
        if r.role == "support" {
            assert!((r.mean_cosine.unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(r.hausdorff, Some(0.0));
        }
    }
    for alg in Algorithm::ALL {
        for seed in [0, 1] {
            let name = format!("{alg}_seed{seed}");
            let ckpt = load_checkpoint(&dir.path().join("checkpoints").join(format!("{name}.xgr"))).unwrap();
            assert!(ckpt.params.is_finite());
            for lang in ["en", "fr", "pt"] {
                let pca = fs::read_to_string(dir.path().join("runs").join(&name).join(format!("pca_{lang}.csv"))).unwrap();
                assert!(pca.starts_with("language,pair_id,pc1,pc2"));
            }
        }
    }
}

#[test]
fn identical_runs_agree_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&tiny_config(a.path()), 1).unwrap();
    run(&tiny_config(b.path()), 3).unwrap();
    assert_eq!(
        csv_without_wall_clock(&a.path().join("metrics.csv")),
        csv_without_wall_clock(&b.path().join("metrics.csv"))
    );
}

#[test]
fn failed_runs_leave_the_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    config.split.rate = 0.005;
    assert!(run(&config, 1).is_err());
    let marker = fs::read_to_string(dir.path().join(INCOMPLETE_MARKER)).unwrap();
    assert!(marker.contains("failed"));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["complete"], false);
}

#[test]
fn invalid_config_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(&dir.path().join("out"));
    config.seeds.clear();
    assert!(run(&config, 1).is_err());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn sweep_isolates_failing_points() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    config.algorithms = vec![Algorithm::XgReptile];
    config.seeds = vec![0];
    let out = sweep(&config, Axis::Rate, &[0.005, 0.2], 2).unwrap();
    assert_eq!(out.summary.points.len(), 2);
    assert!(out.summary.points[0].error.is_some());
    assert!(out.summary.points[1].error.is_none());
    assert_eq!(out.summary.failures().count(), 1);
    assert_eq!(out.records.len(), 3);
    assert!(dir.path().join("sweep.csv").is_file());
    assert!(dir.path().join("sweep_summary.json").is_file());
    assert!(dir.path().join("rate_0.2").join("metrics.csv").is_file());
}

#[test]
fn single_step_sweep_point_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    config.algorithms = vec![Algorithm::XgReptile];
    config.seeds = vec![0];
    let out = sweep(&config, Axis::K, &[1.0], 1).unwrap();
    assert!(out.records.iter().all(|r| r.k == 1));
}

#[test]
fn analyze_reproduces_run_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config(dir.path());
    config.algorithms = vec![Algorithm::Joint];
    config.seeds = vec![1];
    let out = run(&config, 1).unwrap();
    let ckpt = out.summary.runs[0].checkpoint.clone().unwrap();
    let report = analyze(&config, &ckpt, 1, &dir.path().join("analysis")).unwrap();
    for r in out.test_records() {
        let lang = &report.languages[&r.language];
        assert_eq!(lang.exact_match, r.exact_match.unwrap());
        if let Some(cos) = r.mean_cosine {
            assert_eq!(lang.mean_cosine, cos);
            assert_eq!(lang.hausdorff, r.hausdorff.unwrap());
        }
    }
    assert!(dir.path().join("analysis").join("analysis.json").is_file());
    assert!(dir.path().join("analysis").join("pca_fr.csv").is_file());
}

#[test]
fn compare_on_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let out = run(&config, 2).unwrap();
    let sets = result_sets(&[("tiny".into(), out.records.clone())]);
    let report = compare(&sets, &["joint>joint".parse::<Hypothesis>().unwrap()]).unwrap();
    assert!(!report.verdicts[0].passed);
    let same = result_sets(&[("a".into(), out.records.clone()), ("b".into(), out.records)]);
    let report = compare(&same, &[]).unwrap();
    assert!(report
        .pairwise
        .iter()
        .filter(|p| p.a[2..] == p.b[2..])
        .all(|p| p.mean_difference == 0.0 && p.per_language.values().all(|d| *d == 0.0)));
}
