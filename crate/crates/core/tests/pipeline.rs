use mage_core::augment::ViewKind;
use mage_core::data::{generate_synthetic, Dataset, ShufflePlan};
use mage_core::eval::{
    ablation_matrix, render_csv, render_markdown, run_ablation, run_shuffled_benchmark, standard_configs,
    AblationConfig, AugmenterSet, ClassifierKind, PipelineSettings, RunContext, Split, CSV_HEADER,
};
use mage_core::math::Rng;
use mage_core::Error;

fn data(per_class: usize, seed: u64) -> Dataset {
    generate_synthetic(3, 16, per_class, 10.0, &mut Rng::new(seed)).unwrap()
}

fn settings() -> PipelineSettings {
    let mut s = PipelineSettings::desk();
    s.autoencoder.epochs = 5;
    s.vae.epochs = 5;
    s.training.max_epochs = 15;
    s
}

#[test]
fn single_run_plan_gives_one_record_per_config() {
    let plan = ShufflePlan {
        n_shuffles: 1,
        n_iterations: 1,
        base_seed: 3,
    };
    let configs = standard_configs(ClassifierKind::Softmax);
    let result = run_shuffled_benchmark(&data(20, 1), &plan, &configs, &settings(), 1).unwrap();
    assert_eq!(result.runs.len(), configs.len());
    for (config, run) in configs.iter().zip(&result.runs) {
        let s = result.summary(&config.name()).unwrap();
        assert_eq!(
            (s.runs, s.mean_accuracy, s.std_accuracy),
            (1, run.metrics.accuracy, 0.0)
        );
    }
    let csv = render_csv(&result);
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    assert_eq!(csv.lines().count(), 1 + configs.len());
    let md = render_markdown(&result);
    assert_eq!(
        md.lines().filter(|l| l.starts_with("| softmax/")).count(),
        configs.len()
    );
}

#[test]
fn every_config_gets_shuffles_times_iterations_runs_in_order() {
    let plan = ShufflePlan {
        n_shuffles: 2,
        n_iterations: 3,
        base_seed: 4,
    };
    let configs = [
        "lstm/original".parse::<AblationConfig>().unwrap(),
        "softmax/mage+dae".parse().unwrap(),
    ];
    let result = run_shuffled_benchmark(&data(15, 2), &plan, &configs, &settings(), 1).unwrap();
    for c in &configs {
        assert_eq!(result.runs_for(&c.name()).count(), 6);
    }
    let keys: Vec<(String, usize, usize)> = result
        .runs
        .iter()
        .map(|r| (r.config.clone(), r.shuffle, r.iteration))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by_key(|(c, s, i)| (configs.iter().position(|x| x.name() == *c), *s, *i));
    assert_eq!(keys, sorted);
}

#[test]
fn worker_count_does_not_change_results() {
    let plan = ShufflePlan {
        n_shuffles: 2,
        n_iterations: 2,
        base_seed: 5,
    };
    let configs = [
        "lstm/mage+vae".parse::<AblationConfig>().unwrap(),
        "softmax/with-dae".parse().unwrap(),
    ];
    let d = data(15, 3);
    let one = run_shuffled_benchmark(&d, &plan, &configs, &settings(), 1).unwrap();
    let three = run_shuffled_benchmark(&d, &plan, &configs, &settings(), 3).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.to_json().unwrap(), three.to_json().unwrap());
}

#[test]
fn augmentation_keeps_synthetic_clusters_separable() {
    let (train, test) = (data(30, 6), data(10, 7));
    let result = run_ablation(&train, &test, &ablation_matrix(), &settings(), &[1, 2], 1).unwrap();
    for classifier in [ClassifierKind::Lstm, ClassifierKind::Softmax] {
        let original = AblationConfig::new(AugmenterSet::Original, false, classifier);
        let base = result.summary(&original.name()).unwrap().mean_accuracy;
        for c in standard_configs(classifier) {
            let acc = result.summary(&c.name()).unwrap().mean_accuracy;
            assert!(acc > 0.9, "{c}: {acc}");
            assert!((acc - base).abs() < 0.05, "{c}: {acc} vs original {base}");
        }
    }
    assert!(result.runs.iter().all(|r| r.shuffle == 0 && r.iteration < 2));
}

#[test]
fn empty_selections_are_usage_errors() {
    let d = data(5, 8);
    let err = run_ablation(&d, &d, &[], &settings(), &[1], 1).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
    let err = run_ablation(&d, &d, &ablation_matrix(), &settings(), &[], 1).unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

#[test]
fn preloaded_augmenters_must_come_from_the_same_training_split() {
    let s = settings();
    let (train, other) = (data(10, 9), data(10, 10));
    let mut source = RunContext::train_only(&train, &s, 1).unwrap();
    let vae = source.vae().unwrap().clone();
    assert!(source.histories().vae.is_some() && source.histories().autoencoder.is_none());
    assert_eq!(source.view(Split::Test, ViewKind::Linear).unwrap().rows(), 0);

    let mut same = RunContext::new(&train, &other, &s, 2).unwrap();
    same.preload_vae(vae.clone()).unwrap();
    assert_eq!(same.vae().unwrap(), &vae);
    assert!(same.histories().vae.is_none());

    let mut moved = RunContext::new(&other, &train, &s, 1).unwrap();
    assert!(matches!(moved.preload_vae(vae).unwrap_err(), Error::Usage(_)));
}
