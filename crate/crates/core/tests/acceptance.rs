//! Acceptance criteria for the engine. Every criterion prints one PASS or
//! FAIL line; the run fails if any criterion does.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use mage_core::attention::{mage_forward, mage_forward_with_score_offsets, mage_init, MageParams};
use mage_core::augment::{reparameterize, train_autoencoder, train_vae, Reconstruct, VaeConfig, ViewKind, ViewStack};
use mage_core::checkpoint::Checkpointable;
use mage_core::classify::{
    lbfgs_minimize, train_classifier, train_softmax, Labeled, LbfgsConfig, Lstm, LstmShape, MageLstm, MageSoftmax,
    SoftmaxModel, TrainConfig, TrainedClassifier, ViewClassifier, DEFAULT_L2,
};
use mage_core::data::{
    generate_synthetic, read_binary, read_records, write_binary, write_records, Dataset, MinMaxScaler, ShufflePlan,
};
use mage_core::eval::{
    ablation_matrix, confusion, emit_report, metrics_from_confusion, run_shuffled_benchmark, AblationConfig,
    ConfusionMatrix, PipelineSettings, ReportFormat, RunContext,
};
use mage_core::manifest::{Manifest, MANIFEST_FILE};
use mage_core::math::{Matrix, Parameters, Rng};
use mage_core::verify::{run_gradient_suite, Component, SuiteConfig};
use mage_core::Error;

#[derive(Default)]
struct Checks {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Checks {
    fn expect(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.failures.push(what.into());
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        self.notes.push(what.into());
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn gradient_suite() -> Checks {
    let mut c = Checks::default();
    let start = Instant::now();
    let reports = run_gradient_suite(&SuiteConfig::default(), &Component::ALL).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    c.expect(reports.len() == Component::ALL.len(), "not every component was checked");
    for r in &reports {
        c.expect(
            r.configs >= 10,
            format!("{}: only {} configurations", r.component, r.configs),
        );
        c.expect(
            r.passed && r.max_rel_error < 1e-5,
            format!("{}: max rel error {:.2e} at {}", r.component, r.max_rel_error, r.worst),
        );
    }
    c.expect(elapsed < 60.0, format!("suite took {elapsed:.1}s"));
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    c.note(format!(
        "{} components x {} configs, worst rel error {worst:.1e}, {elapsed:.2}s",
        reports.len(),
        reports.iter().map(|r| r.configs).min().unwrap_or(0)
    ));
    c
}

fn vae_invariants() -> Checks {
    let mut c = Checks::default();
    let n = 10_000;
    let targets: [(f64, f64); 3] = [(0.0, 1.0), (1.5, 0.5), (-2.0, 3.0)];
    let mut rng = Rng::new(31);
    let mu = Matrix::from_vec(n, 3, (0..n).flat_map(|_| targets.map(|t| t.0)).collect()).unwrap();
    let log_var = Matrix::from_vec(n, 3, (0..n).flat_map(|_| targets.map(|t| (t.1 * t.1).ln())).collect()).unwrap();
    let z = reparameterize(&mu, &log_var, &random_matrix(n, 3, &mut rng)).unwrap();
    for (j, &(m, s)) in targets.iter().enumerate() {
        let col: Vec<f64> = z.iter_rows().map(|r| r[j]).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        c.expect(
            (mean - m).abs() <= 4.0 * s / (n as f64).sqrt(),
            format!("sample mean {mean} for target {m}"),
        );
        c.expect(
            (var / (s * s) - 1.0).abs() <= 0.1,
            format!("sample variance {var} for target {}", s * s),
        );
    }

    let data = generate_synthetic(2, 32, 100, 3.0, &mut Rng::new(5)).unwrap();
    let raw = data.vectors();
    let scaler = MinMaxScaler::fit(&raw).unwrap();
    let scaled = scaler.apply(&raw).unwrap();
    let config = VaeConfig {
        epochs: 30,
        ..VaeConfig::default()
    };
    let train_rng = Rng::new(17);
    let initial = mage_core::augment::VaeModel::new(config.clone(), scaler.clone(), &mut train_rng.clone()).unwrap();
    let (trained, history) = train_vae(&scaled, scaler, &config, &mut train_rng.clone()).unwrap();
    c.expect(history.len() == 30, format!("{} epochs recorded", history.len()));
    for (e, h) in history.iter().enumerate() {
        c.expect(h.kl >= 0.0 && h.kl.is_finite(), format!("epoch {} KL {}", e + 1, h.kl));
    }
    let eps = random_matrix(scaled.rows(), config.latent, &mut Rng::new(3));
    let total = |m: &mage_core::augment::VaeModel| m.evaluate(&scaled, &eps).unwrap();
    let (before, after) = (total(&initial), total(&trained));
    c.expect(before.kl >= 0.0 && after.kl >= 0.0, "negative KL on the full set");
    let drop = 1.0 - after.total / before.total;
    c.expect(drop >= 0.3, format!("total loss dropped {:.1}%", 100.0 * drop));
    let epoch_drop = 1.0 - history[history.len() - 1].total / history[0].total;
    c.expect(
        epoch_drop >= 0.3,
        format!("total loss dropped {:.1}% from epoch 1", 100.0 * epoch_drop),
    );
    c.note(format!(
        "reparameterization moments ok; loss {:.4} -> {:.4} ({:.0}% drop, {:.0}% from epoch 1), min epoch KL {:.3e}",
        before.total,
        after.total,
        100.0 * drop,
        100.0 * epoch_drop,
        history.iter().map(|h| h.kl).fold(f64::INFINITY, f64::min)
    ));
    c
}

const KINDS: [ViewKind; 5] = [
    ViewKind::Original,
    ViewKind::Linear,
    ViewKind::Autoencoder,
    ViewKind::Denoising,
    ViewKind::Variational,
];

/// Three views of 8-d vectors where only view 1 carries the label.
fn selectivity_data(rng: &mut Rng) -> (ViewStack, Vec<usize>) {
    let n = 300;
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mut views: Vec<Matrix> = (0..3).map(|_| random_matrix(n, 8, rng)).collect();
    for (i, &y) in labels.iter().enumerate() {
        let v = views[1].get(i, y);
        views[1].set(i, y, v + 3.0);
    }
    (ViewStack::from_parts(KINDS[..3].to_vec(), views).unwrap(), labels)
}

fn selectivity<M: ViewClassifier>(mut model: M, stack: &ViewStack, labels: &[usize]) -> f64 {
    let fit: Vec<usize> = (0..240).collect();
    let val: Vec<usize> = (240..300).collect();
    let (fit_stack, val_stack) = (stack.select(&fit), stack.select(&val));
    let config = TrainConfig {
        lr: 0.01,
        max_epochs: 50,
        ..TrainConfig::default()
    };
    train_classifier(
        &mut model,
        Labeled::new(&fit_stack, &labels[..240]).unwrap(),
        Labeled::new(&val_stack, &labels[240..]).unwrap(),
        &config,
        &mut Rng::new(8),
    )
    .unwrap();
    model.attention_trace(stack).unwrap().unwrap().mean_per_view()[1]
}

fn attention_invariants() -> Checks {
    let mut c = Checks::default();
    let (mut sum_dev, mut shift_dev, mut uniform_dev) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20 {
        let mut rng = Rng::new(1000 + seed);
        let heads = 1 + rng.below(4);
        let dim = heads * (1 + rng.below(4));
        let views = 1 + rng.below(5);
        let params = mage_init(heads, dim, &mut rng).unwrap();
        let stack = ViewStack::from_parts(
            KINDS[..views].to_vec(),
            (0..views).map(|_| random_matrix(6, dim, &mut rng).scale(3.0)).collect(),
        )
        .unwrap();
        let (fused, cache) = mage_forward(&params, &stack).unwrap();
        let trace = cache.trace();
        for s in 0..trace.samples() {
            for h in 0..trace.heads() {
                sum_dev = sum_dev.max((trace.head_weights(s, h).iter().sum::<f64>() - 1.0).abs());
            }
        }
        let offsets: Vec<f64> = (0..heads).map(|_| rng.uniform_range(-50.0, 50.0)).collect();
        let (shifted, _) = mage_forward_with_score_offsets(&params, &stack, &offsets).unwrap();
        shift_dev = shift_dev.max(shifted.sub(&fused).unwrap().max_abs());

        let single = ViewStack::single(random_matrix(6, dim, &mut rng));
        let (_, cache) = mage_forward(&params, &single).unwrap();
        let t = cache.trace();
        for s in 0..t.samples() {
            for h in 0..t.heads() {
                c.expect(
                    t.weight(s, h, 0) == 1.0,
                    format!("single-view weight {}", t.weight(s, h, 0)),
                );
            }
        }

        let x = random_matrix(6, dim, &mut rng);
        let same = ViewStack::from_parts(KINDS[..views].to_vec(), vec![x; views]).unwrap();
        let (_, cache) = mage_forward(&params, &same).unwrap();
        let t = cache.trace();
        for s in 0..t.samples() {
            for h in 0..t.heads() {
                for &w in t.head_weights(s, h) {
                    uniform_dev = uniform_dev.max((w - 1.0 / views as f64).abs());
                }
            }
        }
    }
    c.expect(sum_dev <= 1e-6, format!("weights sum off by {sum_dev:e}"));
    c.expect(
        shift_dev <= 1e-9,
        format!("score shift changed output by {shift_dev:e}"),
    );
    c.expect(
        uniform_dev <= 1e-12,
        format!("identical views off uniform by {uniform_dev:e}"),
    );

    let (stack, labels) = selectivity_data(&mut Rng::new(21));
    let mut init = Rng::new(4);
    let softmax = MageSoftmax {
        mage: mage_init(4, 8, &mut init).unwrap(),
        head: SoftmaxModel::zeros(3, 8, DEFAULT_L2).unwrap(),
    };
    let lstm = MageLstm {
        mage: mage_init(4, 8, &mut init).unwrap(),
        lstm: Lstm::new(
            LstmShape {
                input_dim: 8,
                hidden_dim: 16,
                num_classes: 3,
            },
            &mut init,
        )
        .unwrap(),
    };
    let w_softmax = selectivity(softmax, &stack, &labels);
    let w_lstm = selectivity(lstm, &stack, &labels);
    c.expect(
        w_softmax > 1.0 / 3.0,
        format!("mage+softmax informative weight {w_softmax:.3}"),
    );
    c.expect(w_lstm > 1.0 / 3.0, format!("mage+lstm informative weight {w_lstm:.3}"));
    c.note(format!(
        "sum dev {sum_dev:.1e}, shift dev {shift_dev:.1e}, uniform dev {uniform_dev:.1e}, \
         informative weight {w_softmax:.3} (softmax) {w_lstm:.3} (lstm) vs 1/3"
    ));
    c
}

/// `f(x) = (x - x*)ᵀ A (x - x*) / 2` with eigenvalues spread
/// geometrically over `[1, cond]` in a random orthonormal basis.
fn quadratic(dim: usize, cond: f64, rng: &mut Rng) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while basis.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let eig: Vec<f64> = (0..dim)
        .map(|i| cond.powf(if dim > 1 { i as f64 / (dim - 1) as f64 } else { 0.0 }))
        .collect();
    let a = (0..dim)
        .map(|r| {
            (0..dim)
                .map(|s| (0..dim).map(|k| eig[k] * basis[k][r] * basis[k][s]).sum())
                .collect()
        })
        .collect();
    (a, (0..dim).map(|_| rng.normal()).collect())
}

fn quadratic_objective<'a>(a: &'a [Vec<f64>], opt: &[f64]) -> impl FnMut(&[f64]) -> (f64, Vec<f64>) + 'a {
    let opt = opt.to_vec();
    move |x: &[f64]| {
        let d: Vec<f64> = x.iter().zip(&opt).map(|(x, o)| x - o).collect();
        let g: Vec<f64> = a
            .iter()
            .map(|row| row.iter().zip(&d).map(|(r, v)| r * v).sum())
            .collect();
        (0.5 * d.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>(), g)
    }
}

fn optimizer() -> Checks {
    let mut c = Checks::default();
    let mut cases = 0;
    let mut worst_excess = i64::MIN;
    for &dim in &[2usize, 5, 10, 20, 35, 50] {
        for &cond in &[1.0f64, 10.0, 100.0, 1e4] {
            let memories = if cond <= 10.0 { vec![dim, 10] } else { vec![dim] };
            for memory in memories {
                let mut rng = Rng::new(dim as u64 * 100 + cond.log10() as u64);
                let (a, opt) = quadratic(dim, cond, &mut rng);
                let x0: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let config = LbfgsConfig {
                    memory,
                    gradient_tolerance: 1e-8,
                    ..LbfgsConfig::default()
                };
                let r = lbfgs_minimize(quadratic_objective(&a, &opt), &x0, &config).unwrap();
                cases += 1;
                worst_excess = worst_excess.max(r.iterations as i64 - dim as i64);
                let label = format!("dim {dim} cond {cond:e} memory {memory}");
                c.expect(
                    r.converged && r.grad_norm < 1e-8,
                    format!("{label}: grad norm {:.1e}", r.grad_norm),
                );
                c.expect(r.iterations <= dim + 5, format!("{label}: {} iterations", r.iterations));
                c.expect(
                    r.trajectory.windows(2).all(|w| w[1] <= w[0]),
                    format!("{label}: objective increased"),
                );
            }
        }
    }

    let rosenbrock = |x: &[f64]| {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    };
    let config = LbfgsConfig {
        max_iterations: 100,
        ..LbfgsConfig::default()
    };
    let r = lbfgs_minimize(rosenbrock, &[-1.2, 1.0], &config).unwrap();
    c.expect(
        r.value < 1e-10 && r.iterations <= 100,
        format!("rosenbrock f {:.1e} after {} iterations", r.value, r.iterations),
    );
    c.expect(
        (r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5,
        format!("rosenbrock minimizer {:?}", r.x),
    );

    let data = generate_synthetic(3, 8, 50, 2.0, &mut Rng::new(12)).unwrap();
    let (x, y) = (data.vectors(), data.labels());
    let mut spread = 0.0f64;
    for &l2 in &[DEFAULT_L2, 0.1] {
        let (_, base) = train_softmax(&x, &y, 3, l2, &LbfgsConfig::default(), None).unwrap();
        for seed in 0..4 {
            let mut init = SoftmaxModel::random(3, 8, l2, &mut Rng::new(seed)).unwrap();
            init.params_mut().into_iter().flatten().for_each(|w| *w *= 10.0);
            let (_, fit) = train_softmax(&x, &y, 3, l2, &LbfgsConfig::default(), Some(init)).unwrap();
            spread = spread.max((fit.value - base.value).abs());
        }
    }
    c.expect(
        spread <= 1e-8,
        format!("softmax objective varies by {spread:.1e} across inits"),
    );
    c.note(format!(
        "{cases} quadratics, max iterations - dim = {worst_excess}; rosenbrock {:.1e} in {} its; \
         softmax init spread {spread:.1e}",
        r.value, r.iterations
    ));
    c
}

/// Every matrix with `cells` nonnegative entries summing to at most `max_total`.
fn for_each_matrix(cells: usize, max_total: u64, f: &mut impl FnMut(&[u64])) {
    fn rec(buf: &mut Vec<u64>, cells: usize, remaining: u64, f: &mut impl FnMut(&[u64])) {
        if buf.len() == cells {
            f(buf);
            return;
        }
        for v in 0..=remaining {
            buf.push(v);
            rec(buf, cells, remaining - v, f);
            buf.pop();
        }
    }
    rec(&mut Vec::with_capacity(cells), cells, max_total, f)
}

/// Per-sample counting: accuracy, macro precision, recall and F1 with
/// F1 = 2tp / (2tp + fp + fn).
fn oracle(truth: &[usize], predicted: &[usize], k: usize) -> [f64; 4] {
    let n = truth.len() as f64;
    let correct = truth.iter().zip(predicted).filter(|(t, p)| t == p).count() as f64;
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for class in 0..k {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == class, p == class) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => {}
            }
        }
        if tp + fp > 0.0 {
            precision += tp / (tp + fp);
        }
        if tp + fn_ > 0.0 {
            recall += tp / (tp + fn_);
        }
        if tp > 0.0 {
            f1 += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
    }
    let k = k as f64;
    [correct / n, precision / k, recall / k, f1 / k]
}

fn metrics_oracle() -> Checks {
    let mut c = Checks::default();
    let (mut matrices, mut worst) = (0u64, 0.0f64);
    let (mut truth, mut predicted) = (Vec::new(), Vec::new());
    for k in 1..=3usize {
        for_each_matrix(k * k, 20, &mut |cells| {
            matrices += 1;
            let rows: Vec<Vec<u64>> = cells.chunks(k).map(|r| r.to_vec()).collect();
            let cm = ConfusionMatrix::from_rows(&rows).unwrap();
            truth.clear();
            predicted.clear();
            for (i, &count) in cells.iter().enumerate() {
                for _ in 0..count {
                    truth.push(i / k);
                    predicted.push(i % k);
                }
            }
            if confusion(&truth, &predicted, k).ok().as_ref() != Some(&cm) {
                c.expect(false, format!("confusion mismatch for {rows:?}"));
                return;
            }
            match metrics_from_confusion(&cm) {
                Err(Error::Usage(_)) if truth.is_empty() => {}
                Ok(m) if !truth.is_empty() => {
                    let want = oracle(&truth, &predicted, k);
                    let got = [m.accuracy, m.precision, m.recall, m.f1];
                    let err = want.iter().zip(&got).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    worst = worst.max(err);
                    if err > 1e-12 {
                        c.expect(false, format!("{rows:?}: got {got:?}, oracle {want:?}"));
                    }
                }
                other => c.expect(false, format!("{rows:?}: unexpected {other:?}")),
            }
        });
    }
    c.failures.truncate(5);
    let hand = metrics_from_confusion(&ConfusionMatrix::from_rows(&[vec![2, 0], vec![1, 1]]).unwrap()).unwrap();
    c.expect(hand.accuracy == 0.75, format!("hand accuracy {}", hand.accuracy));
    c.expect(
        (hand.f1 - 11.0 / 15.0).abs() < 1e-12,
        format!("hand macro F1 {}", hand.f1),
    );
    c.note(format!(
        "{matrices} matrices, max deviation {worst:.1e}; hand case accuracy {} macro F1 {:.4}",
        hand.accuracy, hand.f1
    ));
    c
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn end_to_end() -> Checks {
    let mut c = Checks::default();
    let data = generate_synthetic(3, 32, 100, 10.0, &mut Rng::new(2024)).unwrap();
    let plan = ShufflePlan::default();
    let settings = PipelineSettings::desk();
    let configs = ablation_matrix();
    let dir = tempfile::tempdir().unwrap();

    let start = Instant::now();
    let result = run_shuffled_benchmark(&data, &plan, &configs, &settings, 1).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    c.expect(elapsed < 300.0, format!("ablation took {elapsed:.1}s"));
    c.expect(
        result.runs.len() == configs.len() * plan.run_count(),
        format!("{} runs recorded", result.runs.len()),
    );
    let mut lowest = f64::INFINITY;
    for config in &configs {
        let s = result.summary(&config.name()).unwrap();
        lowest = lowest.min(s.mean_accuracy);
        c.expect(s.runs == 20, format!("{}: {} runs", s.config, s.runs));
        c.expect(
            s.mean_accuracy > 0.9,
            format!("{}: mean accuracy {:.4}", s.config, s.mean_accuracy),
        );
        if config.attention {
            let plain = result.summary(&config.without_attention().name()).unwrap();
            c.expect(
                s.mean_accuracy >= plain.mean_accuracy - 0.02,
                format!(
                    "{} {:.4} trails {} {:.4}",
                    s.config, s.mean_accuracy, plain.config, plain.mean_accuracy
                ),
            );
        }
    }

    let rerun = run_shuffled_benchmark(&data, &plan, &configs, &settings, 2).unwrap();
    for format in [ReportFormat::Csv, ReportFormat::Markdown] {
        let a = dir.path().join(format!("first.{}", format.extension()));
        let b = dir.path().join(format!("second.{}", format.extension()));
        emit_report(&result, format, &a).unwrap();
        emit_report(&rerun, format, &b).unwrap();
        c.expect(read(&a) == read(&b), format!("{format:?} reports differ on rerun"));
    }
    c.note(format!(
        "{} configs x {} runs in {elapsed:.1}s, lowest mean accuracy {lowest:.4}, reports identical on rerun",
        configs.len(),
        plan.run_count()
    ));
    c
}

fn same_dataset(a: &Dataset, b: &Dataset) -> Option<f64> {
    if a.len() != b.len() {
        return None;
    }
    let mut worst = 0.0f64;
    for (x, y) in a.records().iter().zip(b.records()) {
        if x.id != y.id || x.language != y.language || x.label != y.label || x.vector.len() != y.vector.len() {
            return None;
        }
        for (u, v) in x.vector.iter().zip(&y.vector) {
            worst = worst.max((u - v).abs());
        }
    }
    Some(worst)
}

fn round_trips<T: Checkpointable + PartialEq>(model: &T, dir: &Path, name: &str, c: &mut Checks) {
    let path = dir.join(format!("{name}.ckpt"));
    model.save(&path).unwrap();
    let loaded = T::load(&path).unwrap();
    c.expect(loaded == *model, format!("{name} differs after reload"));
    let again = dir.join(format!("{name}.again.ckpt"));
    loaded.save(&again).unwrap();
    c.expect(
        read(&path) == read(&again),
        format!("{name} checkpoint bytes differ on resave"),
    );
}

#[derive(Serialize, Deserialize)]
struct RunSpec {
    settings: PipelineSettings,
    plan: ShufflePlan,
    configs: Vec<String>,
    per_class: usize,
    separation: f64,
    data_seed: u64,
}

const OUTPUTS: [&str; 3] = ["results.csv", "results.md", "results.json"];

fn execute(spec: &RunSpec, dir: &Path) -> Manifest {
    let data = generate_synthetic(3, 8, spec.per_class, spec.separation, &mut Rng::new(spec.data_seed)).unwrap();
    let configs: Vec<AblationConfig> = spec.configs.iter().map(|c| c.parse().unwrap()).collect();
    let result = run_shuffled_benchmark(&data, &spec.plan, &configs, &spec.settings, 1).unwrap();
    emit_report(&result, ReportFormat::Csv, &dir.join(OUTPUTS[0])).unwrap();
    emit_report(&result, ReportFormat::Markdown, &dir.join(OUTPUTS[1])).unwrap();
    std::fs::write(dir.join(OUTPUTS[2]), result.to_json().unwrap()).unwrap();
    let mut manifest = Manifest::new("acceptance", spec).unwrap();
    manifest.seed("base_seed", spec.plan.base_seed);
    manifest.seed("data_seed", spec.data_seed);
    for name in OUTPUTS {
        manifest.add_output(dir, name).unwrap();
    }
    manifest.save(&dir.join(MANIFEST_FILE)).unwrap();
    manifest
}

fn persistence() -> Checks {
    let mut c = Checks::default();
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let train = generate_synthetic(3, 8, 20, 4.0, &mut Rng::new(40)).unwrap();
    let test = generate_synthetic(3, 8, 5, 4.0, &mut Rng::new(41)).unwrap();
    let settings = PipelineSettings::desk();
    let mut ctx = RunContext::new(&train, &test, &settings, 9).unwrap();
    round_trips(ctx.autoencoder().unwrap(), root, "autoencoder", &mut c);
    round_trips(ctx.denoising().unwrap(), root, "denoising", &mut c);
    round_trips(ctx.vae().unwrap(), root, "vae", &mut c);
    for name in ["lstm/original", "softmax/original", "lstm/mage+dae", "softmax/mage+vae"] {
        let (model, _) = ctx.fit(name.parse().unwrap()).unwrap();
        round_trips(&model, root, &name.replace('/', "_"), &mut c);
    }
    let mage: MageParams = mage_init(2, 8, &mut Rng::new(3)).unwrap();
    round_trips(&mage, root, "mage", &mut c);
    let raw = train.vectors();
    let scaler = MinMaxScaler::fit(&raw).unwrap();
    let ae_config = mage_core::augment::AeConfig {
        hidden: vec![4],
        latent: 2,
        epochs: 2,
        ..Default::default()
    };
    let (ae, _) = train_autoencoder(&scaler.apply(&raw).unwrap(), scaler, &ae_config, &mut Rng::new(1)).unwrap();
    ae.save(root.join("ae.ckpt")).unwrap();
    let back = mage_core::augment::AutoencoderModel::load(root.join("ae.ckpt")).unwrap();
    c.expect(
        back.reconstruct(&raw).unwrap() == ae.reconstruct(&raw).unwrap(),
        "reloaded autoencoder reconstructs differently",
    );
    c.expect(
        TrainedClassifier::load(root.join("ae.ckpt")).is_err(),
        "checkpoint kind not enforced",
    );

    let records = generate_synthetic(3, 16, 10, 1.0, &mut Rng::new(50)).unwrap();
    let jsonl = root.join("records.jsonl");
    write_records(&records, &jsonl).unwrap();
    let text = std::fs::read_to_string(&jsonl).unwrap();
    let with_header = root.join("records-with-header.jsonl");
    std::fs::write(
        &with_header,
        format!("{{\"metadata\": {{\"model\": \"synthetic\"}}}}\n{text}"),
    )
    .unwrap();
    let binary = root.join("records.bin");
    write_binary(&records, &binary).unwrap();
    for (label, loaded) in [
        ("jsonl", read_records(&jsonl)),
        ("jsonl with metadata", read_records(&with_header)),
        ("binary", read_binary(&binary)),
    ] {
        match loaded.ok().and_then(|d| same_dataset(&records, &d)) {
            Some(err) => c.expect(err <= 1e-6, format!("{label} record round trip off by {err:e}")),
            None => c.expect(false, format!("{label} record round trip changed the records")),
        }
    }

    let spec = RunSpec {
        settings: PipelineSettings::desk(),
        plan: ShufflePlan {
            n_shuffles: 2,
            n_iterations: 1,
            base_seed: 77,
        },
        configs: vec!["lstm/mage+dae".into(), "softmax/with-vae".into()],
        per_class: 20,
        separation: 6.0,
        data_seed: 5,
    };
    let (first, second) = (root.join("run-a"), root.join("run-b"));
    std::fs::create_dir_all(&first).unwrap();
    std::fs::create_dir_all(&second).unwrap();
    execute(&spec, &first);
    let manifest = Manifest::load(&first.join(MANIFEST_FILE)).unwrap();
    let replay: RunSpec = manifest.config_as().unwrap();
    execute(&replay, &second);
    let mismatched = manifest.mismatched_outputs(&second);
    c.expect(
        mismatched.is_empty(),
        format!("replayed outputs differ: {mismatched:?}"),
    );
    std::fs::write(second.join(OUTPUTS[0]), "tampered\n").unwrap();
    c.expect(
        manifest.mismatched_outputs(&second) == [OUTPUTS[0]],
        "manifest did not flag a modified output",
    );
    c.note("8 checkpoint kinds reload exactly; jsonl, metadata-headed jsonl and binary records round trip; manifest replay reproduces all outputs");
    c
}

type Criterion = (&'static str, fn() -> Checks);

fn main() {
    let criteria: [Criterion; 7] = [
        ("gradient suite", gradient_suite),
        ("vae invariants", vae_invariants),
        ("attention invariants", attention_invariants),
        ("optimizer", optimizer),
        ("metrics oracle", metrics_oracle),
        ("end-to-end synthetic pipeline", end_to_end),
        ("determinism and persistence", persistence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let checks = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let message = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Checks {
                failures: vec![message],
                notes: vec![],
            }
        });
        let secs = start.elapsed().as_secs_f64();
        if checks.failures.is_empty() {
            println!("PASS {name} [{secs:.1}s]: {}", checks.notes.join("; "));
        } else {
            failed += 1;
            println!("FAIL {name} [{secs:.1}s]: {}", checks.failures.join("; "));
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
