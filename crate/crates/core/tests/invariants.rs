mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use xgreptile::eval::{exact_match, hausdorff_distance, pca_project};
use xgreptile::meta::{
    inner_loop, reptile_episode, train, xg_reptile_episode, Algorithm, EpisodeConfig, OptimizerKind,
    TrainConfig,
};
use xgreptile::models::{MlpRegressor, MlpRegressorSpec, Model, EOS};
use xgreptile::rng::Stream;
use xgreptile::tasks::{
    generate_corpus, split_sample, sinusoid_family, BatchStream, CorpusConfig, Example, Point, SampleSplit,
    SplitConfig, Strategy,
};
use xgreptile::{param_axpy, ParamVector};

use common::{batches, sgd_episode, small_corpus, tiny_parser};

fn ids(examples: &[Example]) -> BTreeSet<usize> {
    SampleSplit::pair_ids(examples)
}

fn usable(corpus_pairs: usize, split: &SplitConfig) -> usize {
    let hold = |f: f64| (f * corpus_pairs as f64).round() as usize;
    corpus_pairs - hold(split.validation_fraction) - hold(split.test_fraction)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subtractive_split_is_disjoint_and_sized(rate in 0.01f64..0.6, seed in any::<u64>()) {
        let corpus = small_corpus();
        let config = SplitConfig::new(Strategy::Subtractive, rate);
        let split = split_sample(corpus, &config, seed).unwrap();
        let n = usable(corpus.num_pairs(), &config);
        let k = (rate * n as f64).round() as usize;
        let support = ids(&split.support);
        prop_assert_eq!(split.support.len(), n - k);
        let first = ids(&split.targets.values().next().unwrap()[..]);
        for (lang, examples) in &split.targets {
            prop_assert_eq!(examples.len(), k);
            prop_assert!(examples.iter().all(|e| &e.language == lang));
            let t = ids(examples);
            prop_assert!(t.is_disjoint(&support));
            prop_assert_eq!(&t, &first);
        }
    }

    #[test]
    fn parallel_split_overlaps_support(rate in 0.01f64..=1.0, seed in any::<u64>()) {
        let corpus = small_corpus();
        let config = SplitConfig::new(Strategy::Parallel, rate);
        let split = split_sample(corpus, &config, seed).unwrap();
        let n = usable(corpus.num_pairs(), &config);
        let support = ids(&split.support);
        prop_assert_eq!(support.len(), n);
        for examples in split.targets.values() {
            prop_assert_eq!(examples.len(), (rate * n as f64).round() as usize);
            prop_assert!(ids(examples).is_subset(&support));
        }
    }

    #[test]
    fn all_disjoint_split_is_pairwise_disjoint(rate in 0.01f64..0.19, seed in any::<u64>()) {
        let corpus = small_corpus();
        let config = SplitConfig::new(Strategy::AllDisjoint, rate);
        let split = split_sample(corpus, &config, seed).unwrap();
        let mut seen = ids(&split.support);
        for examples in split.targets.values() {
            let t = ids(examples);
            prop_assert!(t.is_disjoint(&seen));
            seen.extend(t);
        }
    }

    #[test]
    fn holdout_sets_are_parallel_and_unseen(seed in any::<u64>()) {
        let corpus = small_corpus();
        let split = split_sample(corpus, &SplitConfig::new(Strategy::Subtractive, 0.1), seed).unwrap();
        let mut training = ids(&split.support);
        training.extend(ids(&split.all_target_examples()));
        for holdout in [&split.validation, &split.test] {
            let reference = ids(&holdout[&split.support_language]);
            prop_assert_eq!(holdout.len(), corpus.languages.len());
            for examples in holdout.values() {
                prop_assert_eq!(&ids(examples), &reference);
            }
            prop_assert!(reference.is_disjoint(&training));
        }
    }

    #[test]
    fn batch_stream_epochs_are_permutations(n in 1usize..60, size in 1usize..15, seed in any::<u64>()) {
        let mut stream = BatchStream::new((0..n).collect::<Vec<_>>(), size, seed, true).unwrap();
        for _ in 0..3 {
            let mut epoch = Vec::new();
            for _ in 0..stream.batches_per_epoch() {
                let batch = stream.next_batch().unwrap();
                prop_assert!(!batch.is_empty() && batch.len() <= size);
                epoch.extend(batch);
            }
            epoch.sort_unstable();
            prop_assert_eq!(epoch, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn hausdorff_is_a_metric_on_point_sets(
        a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..12),
        b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..12),
    ) {
        let ab = hausdorff_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, hausdorff_distance(&b, &a).unwrap());
        prop_assert_eq!(hausdorff_distance(&a, &a).unwrap(), 0.0);
        let mut shuffled = a.clone();
        shuffled.reverse();
        shuffled.push(a[0].clone());
        prop_assert_eq!(hausdorff_distance(&a, &shuffled).unwrap(), 0.0);
        let as_set = |s: &[Vec<f64>]| s.iter().map(|r| r.iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect::<BTreeSet<_>>();
        if as_set(&a) != as_set(&b) {
            prop_assert!(ab > 0.0);
        }
    }

    #[test]
    fn pca_ignores_row_order(seed in any::<u64>(), n in 6usize..20) {
        let mut rng = Stream::new(seed, "pca");
        let scales = [3.0, 2.0, 1.0, 0.5];
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| scales.iter().map(|s| s * rng.normal()).collect())
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| rows[i].clone()).collect();
        let p = pca_project(&rows, 2).unwrap();
        let q = pca_project(&permuted, 2).unwrap();
        for (c, d) in p.components.iter().flatten().zip(q.components.iter().flatten()) {
            prop_assert!((c - d).abs() < 1e-6, "{} vs {}", c, d);
        }
        for (j, &i) in order.iter().enumerate() {
            for (x, y) in p.coords[i].iter().zip(&q.coords[j]) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn exact_match_is_permutation_equivariant(
        pairs in prop::collection::vec((prop::collection::vec(3usize..6, 0..4), prop::collection::vec(3usize..6, 0..4)), 1..20),
        seed in any::<u64>(),
    ) {
        let (preds, golds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let base = exact_match(&preds, &golds).unwrap();
        let mut order: Vec<usize> = (0..preds.len()).collect();
        Stream::new(seed, "order").shuffle(&mut order);
        let p: Vec<_> = order.iter().map(|&i| preds[i].clone()).collect();
        let g: Vec<_> = order.iter().map(|&i| golds[i].clone()).collect();
        prop_assert_eq!(base, exact_match(&p, &g).unwrap());
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn parser_loss_ignores_batch_order(seed in any::<u64>()) {
        let corpus = small_corpus();
        let model = tiny_parser(corpus);
        let params = model.init_params(seed);
        let mut rng = Stream::new(seed, "batch");
        let batch: Vec<Example> = (0..6).map(|_| corpus.examples[rng.below(corpus.examples.len())].clone()).collect();
        let mut shuffled = batch.clone();
        rng.shuffle(&mut shuffled);
        let (a, ga) = model.batch_loss(&params, &batch).unwrap();
        let (b, gb) = model.batch_loss(&params, &shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        for (x, y) in ga.values().iter().zip(gb.values()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn mlp_loss_ignores_batch_order(seed in any::<u64>()) {
        let model = MlpRegressor::new(MlpRegressorSpec::default()).unwrap();
        let params = model.init_params(seed);
        let task = &sinusoid_family((0.1, 5.0), (0.0, std::f64::consts::PI), 1, 10, seed).unwrap()[0];
        let mut shuffled: Vec<Point> = task.points.clone();
        Stream::new(seed, "order").shuffle(&mut shuffled);
        let a = model.batch_value(&params, &task.points).unwrap();
        let b = model.batch_value(&params, &shuffled).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn decoded_tokens_stay_in_vocabulary(seed in any::<u64>()) {
        let corpus = small_corpus();
        let model = tiny_parser(corpus);
        let params = model.init_params(seed).scaled(4.0);
        let mut rng = Stream::new(seed, "inputs");
        let inputs: Vec<Vec<usize>> = (0..5).map(|_| corpus.examples[rng.below(corpus.examples.len())].encoder_input()).collect();
        for out in model.decode_greedy_batch(&params, &inputs).unwrap() {
            prop_assert!(out.len() <= model.spec().max_decode_len);
            prop_assert!(out.iter().all(|&t| t < corpus.vocab.output.len() && t != EOS));
        }
    }
}

#[test]
fn corpus_is_parallel_and_closed_over_its_vocabulary() {
    let corpus = small_corpus();
    let (vi, vo) = (corpus.vocab.input.len(), corpus.vocab.output.len());
    let mut forms = BTreeSet::new();
    for pair in 0..corpus.num_pairs() {
        let en = corpus.example(pair, 0);
        assert!(forms.insert(en.logical_form.clone()), "duplicate logical form at pair {pair}");
        for lang in 0..corpus.languages.len() {
            let ex = corpus.example(pair, lang);
            assert_eq!(ex.pair_id, pair);
            assert_eq!(ex.logical_form, en.logical_form);
            assert!(!ex.utterance.is_empty());
            assert!(ex.encoder_input().iter().all(|&t| t < vi));
            assert!(ex.logical_form.iter().all(|&t| t < vo));
        }
    }
}

#[test]
fn corpus_bytes_depend_only_on_seed() {
    let config = CorpusConfig {
        num_pairs: 200,
        ..CorpusConfig::default()
    };
    let dump = |seed| {
        let mut buf = Vec::new();
        generate_corpus(&config, seed).unwrap().write_jsonl(&mut buf).unwrap();
        buf
    };
    assert_eq!(dump(3), dump(3));
    assert_ne!(dump(3), dump(4));
}

#[test]
fn default_corpus_has_unique_logical_forms() {
    let corpus = generate_corpus(&CorpusConfig::default(), 0).unwrap();
    assert_eq!(corpus.num_pairs(), 2000);
    assert_eq!(corpus.languages.len(), 6);
    let forms: BTreeSet<_> = (0..2000).map(|p| corpus.example(p, 0).logical_form.clone()).collect();
    assert_eq!(forms.len(), 2000);
}

#[test]
fn all_disjoint_rejects_oversubscribed_rates() {
    let corpus = small_corpus();
    assert!(split_sample(corpus, &SplitConfig::new(Strategy::AllDisjoint, 0.25), 0).is_err());
    assert!(split_sample(corpus, &SplitConfig::new(Strategy::Subtractive, 1.0), 0).is_err());
}

#[test]
fn small_target_pool_is_recycled() {
    let mut stream = BatchStream::new((0..45).collect::<Vec<_>>(), 10, 9, true).unwrap();
    for _ in 0..4 {
        let window: Vec<usize> = (0..5).flat_map(|_| stream.next_batch().unwrap()).collect();
        assert_eq!(window.len(), 45);
        assert_eq!(window.iter().collect::<BTreeSet<_>>().len(), 45);
    }
    let mut once = BatchStream::new((0..45).collect::<Vec<_>>(), 10, 9, false).unwrap();
    assert_eq!(once.by_ref().count(), 5);
    assert!(once.next_batch().is_none());
}

#[test]
fn init_seeds_disagree_almost_everywhere() {
    let corpus = small_corpus();
    let parser = tiny_parser(corpus);
    let mlp = MlpRegressor::new(MlpRegressorSpec::default()).unwrap();
    let check = |a: ParamVector, b: ParamVector| {
        let mut total = 0;
        let mut differ = 0;
        for e in a.layout().entries().iter().filter(|e| e.shape.len() == 2) {
            let (x, y) = (a.block(&e.name).unwrap(), b.block(&e.name).unwrap());
            total += x.len();
            differ += x.iter().zip(y).filter(|(u, v)| u != v).count();
        }
        assert!(differ as f64 >= 0.99 * total as f64, "{differ} of {total}");
    };
    check(parser.init_params(1), parser.init_params(2));
    check(mlp.init_params(1), mlp.init_params(2));
    assert_eq!(parser.init_params(5).values(), parser.init_params(5).values());
}

#[test]
fn parser_memorizes_one_example() {
    let corpus = small_corpus();
    let model = tiny_parser(corpus);
    let example = corpus.example(3, 2).clone();
    let mut params = model.init_params(0);
    let mut outer = EpisodeConfig {
        outer_optimizer: OptimizerKind::Adam,
        outer_lr: 0.05,
        ..EpisodeConfig::default()
    }
    .outer_state();
    let batch = vec![example.clone()];
    for _ in 0..300 {
        let (_, grad) = model.batch_loss(&params, &batch).unwrap();
        params = outer.step(&params, &grad).unwrap();
    }
    let decoded = model.decode_greedy(&params, &example.encoder_input()).unwrap();
    assert_eq!(decoded, example.logical_form);
}

#[test]
fn parser_macro_gradient_telescopes() {
    let corpus = small_corpus();
    let model = tiny_parser(corpus);
    for k in [1, 2, 5, 10] {
        let config = sgd_episode(k, 0.05, 0.1, None);
        let phi_1 = model.init_params(k as u64);
        let support = batches(&corpus.examples, 11 * k, k, 4);
        let inner = inner_loop(&model, &phi_1, &support, &config).unwrap();
        let mut residual = inner.phi_k.sub(&phi_1).unwrap();
        for g in &inner.step_gradients {
            residual.axpy_assign(config.inner_lr, g).unwrap();
        }
        assert!(residual.norm_inf() <= 1e-12, "K={k}: {}", residual.norm_inf());
    }
}

#[test]
fn zero_target_weight_reproduces_reptile_over_many_episodes() {
    let corpus = small_corpus();
    let model = tiny_parser(corpus);
    let config = EpisodeConfig {
        k: 3,
        inner_lr: 0.05,
        target_weight: Some(0.0),
        batch_size: 3,
        ..EpisodeConfig::default()
    };
    let mut theta_xg = model.init_params(4);
    let mut theta_rep = theta_xg.clone();
    let (mut outer_xg, mut outer_rep) = (config.outer_state(), config.outer_state());
    for episode in 0..100 {
        let support = batches(&corpus.examples, episode * 9, 3, 3);
        let target = &batches(&corpus.examples, episode * 5 + 1000, 1, 3)[0];
        theta_xg = xg_reptile_episode(&model, &theta_xg, &support, target, &config, &mut outer_xg)
            .unwrap()
            .theta;
        theta_rep = reptile_episode(&model, &theta_rep, &support, &config, &mut outer_rep)
            .unwrap()
            .theta;
    }
    let bits = |p: &ParamVector| p.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&theta_xg), bits(&theta_rep));
}

/// `theta - beta*alpha*g_S(theta) - beta*lambda*g_T(theta - alpha*g_S(theta))`.
fn two_term_update<M: Model>(
    model: &M,
    theta: &ParamVector,
    support: &[M::Item],
    target: &[M::Item],
    alpha: f64,
    beta: f64,
    lambda: f64,
) -> ParamVector {
    let (_, g_s) = model.batch_loss(theta, support).unwrap();
    let phi = param_axpy(-alpha, &g_s, theta).unwrap();
    let (_, g_t) = model.batch_loss(&phi, target).unwrap();
    let step = param_axpy(-beta * alpha, &g_s, theta).unwrap();
    param_axpy(-beta * lambda, &g_t, &step).unwrap()
}

fn max_gap(a: &ParamVector, b: &ParamVector) -> f64 {
    a.sub(b).unwrap().norm_inf()
}

#[test]
fn single_step_episode_is_first_order_dg_maml() {
    let corpus = small_corpus();
    let parser = tiny_parser(corpus);
    let mlp = MlpRegressor::new(MlpRegressorSpec { hidden: vec![8, 8] }).unwrap();
    for seed in 0..20u64 {
        let (alpha, beta, lambda) = (0.03, 0.2, 0.07);
        let config = sgd_episode(1, alpha, beta, Some(lambda));

        let theta = parser.init_params(seed);
        let support = batches(&corpus.examples, seed as usize * 13, 1, 4);
        let target = &batches(&corpus.examples, seed as usize * 7 + 1200, 1, 4)[0];
        let got = xg_reptile_episode(&parser, &theta, &support, target, &config, &mut config.outer_state()).unwrap();
        let want = two_term_update(&parser, &theta, &support[0], target, alpha, beta, lambda);
        assert!(max_gap(&got.theta, &want) <= 1e-10, "parser seed {seed}");

        let tasks = sinusoid_family((0.1, 5.0), (0.0, std::f64::consts::PI), 2, 5, seed).unwrap();
        let theta = mlp.init_params(seed);
        let support = vec![tasks[0].points.clone()];
        let got = xg_reptile_episode(&mlp, &theta, &support, &tasks[1].points, &config, &mut config.outer_state()).unwrap();
        let want = two_term_update(&mlp, &theta, &support[0], &tasks[1].points, alpha, beta, lambda);
        assert!(max_gap(&got.theta, &want) <= 1e-10, "mlp seed {seed}");
    }
}

#[test]
fn episodes_are_deterministic() {
    let corpus = small_corpus();
    let model = tiny_parser(corpus);
    let config = EpisodeConfig {
        k: 4,
        inner_lr: 0.05,
        ..EpisodeConfig::default()
    };
    let theta = model.init_params(8);
    let support = batches(&corpus.examples, 0, 4, 5);
    let target = &batches(&corpus.examples, 900, 1, 5)[0];
    let run = || {
        xg_reptile_episode(&model, &theta, &support, target, &config, &mut config.outer_state())
            .unwrap()
            .theta
            .values()
            .to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn target_batches_follow_the_one_in_k_ratio() {
    let corpus = small_corpus();
    let model = tiny_parser(corpus);
    let split = split_sample(corpus, &SplitConfig::new(Strategy::Subtractive, 0.1), 0).unwrap();
    for k in [1, 3, 7] {
        let episode = EpisodeConfig {
            k,
            inner_lr: 0.01,
            batch_size: 10,
            ..EpisodeConfig::default()
        };
        let support_batches = split.support.len().div_ceil(episode.batch_size);
        let episodes = support_batches.div_ceil(k);
        let config = TrainConfig {
            max_steps: episodes,
            patience: usize::MAX,
            eval_interval: episodes,
            validation_limit: Some(5),
            ..TrainConfig::default()
        };
        let out = train(&model, model.init_params(0), Algorithm::XgReptile, &split, &episode, &config, 0).unwrap();
        assert_eq!(out.target_batches, episodes, "K={k}");
    }
}
