//! Fixed-split ablations and the repeated-shuffle benchmark.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsRecord;
use super::pipeline::{run_configs, AblationConfig, PipelineSettings};
use crate::data::{make_shuffle_plan, Dataset, ShufflePlan};
use crate::error::{Error, Result};

/// Reference corpus sizes whose ratio sets the train/test cut after each
/// shuffle.
pub const REFERENCE_TRAIN_SIZE: usize = 7940;
pub const REFERENCE_TEST_SIZE: usize = 1482;

/// Test-split size for `n` samples at the reference ratio, leaving both
/// parts nonempty.
pub fn test_split_size(n: usize) -> usize {
    let ratio = REFERENCE_TEST_SIZE as f64 / (REFERENCE_TRAIN_SIZE + REFERENCE_TEST_SIZE) as f64;
    ((n as f64 * ratio).round() as usize).clamp(1.min(n), n.saturating_sub(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: String,
    pub shuffle: usize,
    pub iteration: usize,
    pub seed: u64,
    pub metrics: MetricsRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation; zero for a single run.
    pub std_accuracy: f64,
    pub mean_f1: f64,
}

/// Runs ordered by configuration (in the order given), then shuffle, then
/// iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub configs: Vec<String>,
    pub runs: Vec<RunRecord>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

impl BenchmarkResult {
    pub fn runs_for<'a>(&'a self, config: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs.iter().filter(move |r| r.config == config)
    }

    pub fn summary(&self, config: &str) -> Option<ConfigSummary> {
        let accuracy: Vec<f64> = self.runs_for(config).map(|r| r.metrics.accuracy).collect();
        if accuracy.is_empty() {
            return None;
        }
        let f1: Vec<f64> = self.runs_for(config).map(|r| r.metrics.f1).collect();
        Some(ConfigSummary {
            config: config.to_string(),
            runs: accuracy.len(),
            mean_accuracy: mean(&accuracy),
            std_accuracy: sample_std(&accuracy),
            mean_f1: mean(&f1),
        })
    }

    pub fn summaries(&self) -> Vec<ConfigSummary> {
        self.configs.iter().filter_map(|c| self.summary(c)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))
    }
}

struct Unit {
    shuffle: usize,
    iteration: usize,
    seed: u64,
    train: Dataset,
    test: Dataset,
}

/// Executes independent runs on a pool of `jobs` threads (sequentially for
/// `jobs <= 1`) and folds them in input order.
fn execute(
    units: Vec<Unit>,
    configs: &[AblationConfig],
    settings: &PipelineSettings,
    jobs: usize,
) -> Result<BenchmarkResult> {
    settings.validate()?;
    if configs.is_empty() {
        return Err(Error::Usage("no ablation configurations selected".into()));
    }
    let run = |u: &Unit| {
        run_configs(&u.train, &u.test, configs, settings, u.seed)
            .map_err(|e| e.context(format!("shuffle {} iteration {}", u.shuffle, u.iteration)))
    };
    let outcomes: Vec<Result<Vec<MetricsRecord>>> = if jobs <= 1 {
        units.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
        pool.install(|| units.par_iter().map(run).collect())
    };
    let mut per_unit = Vec::with_capacity(units.len());
    for outcome in outcomes {
        per_unit.push(outcome?);
    }
    let mut runs = Vec::with_capacity(units.len() * configs.len());
    for (c, config) in configs.iter().enumerate() {
        for (u, metrics) in units.iter().zip(&per_unit) {
            runs.push(RunRecord {
                config: config.name(),
                shuffle: u.shuffle,
                iteration: u.iteration,
                seed: u.seed,
                metrics: metrics[c],
            });
        }
    }
    Ok(BenchmarkResult {
        configs: configs.iter().map(|c| c.name()).collect(),
        runs,
    })
}

/// Every configuration on a fixed train/test pair, once per seed. Runs are
/// recorded as shuffle 0, iteration = seed index.
pub fn run_ablation(
    train: &Dataset,
    test: &Dataset,
    configs: &[AblationConfig],
    settings: &PipelineSettings,
    seeds: &[u64],
    jobs: usize,
) -> Result<BenchmarkResult> {
    if seeds.is_empty() {
        return Err(Error::Usage("at least one seed is required".into()));
    }
    let units = seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| Unit {
            shuffle: 0,
            iteration: i,
            seed,
            train: train.clone(),
            test: test.clone(),
        })
        .collect();
    execute(units, configs, settings, jobs)
}

/// For each shuffle the combined dataset is permuted and cut into train and
/// test at the reference ratio; every iteration of a shuffle reuses that cut
/// with its own seed.
pub fn run_shuffled_benchmark(
    dataset: &Dataset,
    plan: &ShufflePlan,
    configs: &[AblationConfig],
    settings: &PipelineSettings,
    jobs: usize,
) -> Result<BenchmarkResult> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Usage(format!("benchmark needs at least 2 records, got {n}")));
    }
    let n_test = test_split_size(n);
    let units = make_shuffle_plan(plan, n)?
        .into_iter()
        .map(|run| {
            let (train_idx, test_idx) = run.order.split_at(n - n_test);
            Unit {
                shuffle: run.shuffle,
                iteration: run.iteration,
                seed: run.seed,
                train: dataset.subset(train_idx),
                test: dataset.subset(test_idx),
            }
        })
        .collect();
    execute(units, configs, settings, jobs)
}
