//! Subcommands. Each writes into its own directory and finishes with a
//! manifest of the resolved configuration, seeds, and the hashes of every
//! file it read and wrote.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mage_core::augment::ViewKind;
use mage_core::checkpoint::Checkpointable;
use mage_core::classify::{predict_from_logits, predictions_csv};
use mage_core::data::{
    generate_synthetic, load_records, stratified_split, write_binary, write_records, Dataset, EmbeddingRecord,
    CLASS_NAMES, NUM_CLASSES,
};
use mage_core::eval::{
    ablation_matrix, confusion, metrics_from_confusion, render_report, run_shuffled_benchmark, test_split_size,
    AblationConfig, ReportFormat, RunContext, Split,
};
use mage_core::fsutil::write_atomic;
use mage_core::manifest::{Manifest, MANIFEST_FILE};
use mage_core::math::{Matrix, Rng};
use mage_core::verify::{render_suite_table, run_gradient_suite, Component, SuiteConfig};
use mage_core::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::cli::{AblateArgs, AugmentArgs, Augmenter, Command, GradcheckArgs, TrainAugArgs, TrainClfArgs, ViewName};
use crate::config::PipelineConfig;

pub const AUTOENCODER_CKPT: &str = "autoencoder.ckpt";
pub const DENOISING_CKPT: &str = "denoising.ckpt";
pub const VAE_CKPT: &str = "vae.ckpt";

pub fn run(command: &Command, config: &PipelineConfig) -> Result<ExitCode> {
    match command {
        Command::Ingest => ingest(config),
        Command::TrainAug(args) => train_aug(config, args),
        Command::Augment(args) => augment(config, args),
        Command::TrainClf(args) => train_clf(config, args),
        Command::Ablate(args) => ablate(config, args),
        Command::Gradcheck(args) => return gradcheck(config, args),
    }?;
    Ok(ExitCode::SUCCESS)
}

/// What a manifest records as its configuration.
#[derive(Serialize)]
struct Recorded<'a, A: Serialize> {
    config: &'a PipelineConfig,
    args: A,
}

/// Output directory of one command and the manifest being built for it.
struct Run {
    dir: PathBuf,
    manifest: Manifest,
}

impl Run {
    fn start(command: &str, dir: PathBuf, config: &PipelineConfig, args: impl Serialize) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut manifest = Manifest::new(command, &Recorded { config, args })?;
        manifest.seed("seed", config.seed);
        Ok(Run { dir, manifest })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        write_atomic(&self.path(name), text.as_bytes())?;
        self.record(name)
    }

    /// Adds a file already written under the run directory.
    fn record(&mut self, name: &str) -> Result<()> {
        self.manifest.add_output(&self.dir, name)
    }

    fn read(&mut self, path: &Path) -> Result<Dataset> {
        let data = load_records(path).map_err(|e| e.context(format!("reading {}", path.display())))?;
        if data.is_empty() {
            return Err(Error::Validation(format!("{} holds no records", path.display())));
        }
        self.manifest.add_input(path)?;
        Ok(data)
    }

    fn finish(self) -> Result<()> {
        self.manifest.save(&self.dir.join(MANIFEST_FILE))
    }
}

fn json_text(value: &impl Serialize) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

struct Splits {
    train: Dataset,
    test: Option<Dataset>,
}

/// Generated clusters cut at the reference ratio, or the configured files.
fn load_splits(config: &PipelineConfig, run: &mut Run) -> Result<Splits> {
    let s = &config.synthetic;
    if s.enabled {
        run.manifest.seed("synthetic", s.seed);
        let rng = Rng::new(s.seed);
        let data = generate_synthetic(
            s.classes,
            s.dimension,
            s.per_class,
            s.separation,
            &mut rng.fork_named("data"),
        )?;
        let fraction = test_split_size(data.len()) as f64 / data.len() as f64;
        let (train, test) = stratified_split(&data, fraction, &mut rng.fork_named("split"))?;
        return Ok(Splits {
            train,
            test: Some(test),
        });
    }
    let path =
        config.paths.train.as_ref().ok_or_else(|| {
            Error::Usage("no training records: pass --train, set paths.train, or use --synthetic".into())
        })?;
    let train = run.read(path)?;
    let test = match &config.paths.test {
        Some(path) => Some(run.read(path)?),
        None => None,
    };
    if let Some(t) = &test {
        if t.dimension() != train.dimension() {
            return Err(Error::shape(
                "test record dimension",
                train.dimension().unwrap_or(0),
                t.dimension().unwrap_or(0),
            ));
        }
    }
    Ok(Splits { train, test })
}

fn context<'a>(train: &Dataset, test: Option<&Dataset>, config: &'a PipelineConfig) -> Result<RunContext<'a>> {
    match test {
        Some(test) => RunContext::new(train, test, &config.pipeline, config.seed),
        None => RunContext::train_only(train, &config.pipeline, config.seed),
    }
}

/// Loads whichever augmenter checkpoints exist in `dir` into `ctx`.
fn preload(ctx: &mut RunContext<'_>, dir: &Path, run: &mut Run) -> Result<Vec<Augmenter>> {
    let mut loaded = Vec::new();
    for (augmenter, name) in [
        (Augmenter::Ae, AUTOENCODER_CKPT),
        (Augmenter::Dae, DENOISING_CKPT),
        (Augmenter::Vae, VAE_CKPT),
    ] {
        let path = dir.join(name);
        if !path.is_file() {
            continue;
        }
        let describe = |e: Error| e.context(format!("checkpoint {}", path.display()));
        match augmenter {
            Augmenter::Ae => ctx.preload_autoencoder(Checkpointable::load(&path).map_err(describe)?),
            Augmenter::Dae => ctx.preload_denoising(Checkpointable::load(&path).map_err(describe)?),
            Augmenter::Vae => ctx.preload_vae(Checkpointable::load(&path).map_err(describe)?),
        }
        .map_err(describe)?;
        run.manifest.add_input(&path)?;
        loaded.push(augmenter);
    }
    Ok(loaded)
}

fn summary_table(name: &str, data: &Dataset) -> String {
    let mut out = format!(
        "{name}: {} records, dimension {}\n{:<10}",
        data.len(),
        data.dimension().unwrap_or(0),
        "language"
    );
    for class in CLASS_NAMES {
        write!(out, " {class:>9}").expect("writing to a String");
    }
    out.push_str("     total\n");
    let mut rows: Vec<(String, [usize; NUM_CLASSES])> = data.language_class_counts().into_iter().collect();
    rows.push(("all".into(), data.class_counts()));
    for (language, counts) in rows {
        write!(out, "{language:<10}").expect("writing to a String");
        for c in counts {
            write!(out, " {c:>9}").expect("writing to a String");
        }
        writeln!(out, " {:>9}", counts.iter().sum::<usize>()).expect("writing to a String");
    }
    out
}

fn ingest(config: &PipelineConfig) -> Result<()> {
    let mut run = Run::start("ingest", config.output_dir().join("ingest"), config, json!({}))?;
    let splits = load_splits(config, &mut run)?;
    let mut summary = String::new();
    for (name, data) in [("train", Some(&splits.train)), ("test", splits.test.as_ref())] {
        let Some(data) = data else { continue };
        let (jsonl, bin) = (format!("{name}.jsonl"), format!("{name}.bin"));
        write_records(data, run.path(&jsonl))?;
        run.record(&jsonl)?;
        write_binary(data, run.path(&bin))?;
        run.record(&bin)?;
        summary.push_str(&summary_table(name, data));
    }
    print!("{summary}");
    run.write("summary.txt", &summary)?;
    run.finish()
}

fn train_aug(config: &PipelineConfig, args: &TrainAugArgs) -> Result<()> {
    let mut which = if args.only.is_empty() {
        vec![Augmenter::Ae, Augmenter::Dae, Augmenter::Vae]
    } else {
        args.only.clone()
    };
    which.sort();
    which.dedup();
    let names: Vec<String> = which.iter().map(|a| format!("{a:?}").to_lowercase()).collect();
    let mut run = Run::start("train-aug", config.checkpoint_dir(), config, json!({ "only": names }))?;
    let splits = load_splits(config, &mut run)?;
    let mut ctx = RunContext::train_only(&splits.train, &config.pipeline, config.seed)?;
    for augmenter in &which {
        let name = match augmenter {
            Augmenter::Ae => {
                ctx.autoencoder()?.save(run.path(AUTOENCODER_CKPT))?;
                AUTOENCODER_CKPT
            }
            Augmenter::Dae => {
                ctx.denoising()?.save(run.path(DENOISING_CKPT))?;
                DENOISING_CKPT
            }
            Augmenter::Vae => {
                ctx.vae()?.save(run.path(VAE_CKPT))?;
                VAE_CKPT
            }
        };
        run.record(name)?;
    }
    let h = ctx.histories();
    let finals = [
        (
            "autoencoder",
            h.autoencoder.as_ref().map(|h| (h.initial_loss, h.final_loss())),
        ),
        (
            "denoising",
            h.denoising.as_ref().map(|h| (h.initial_loss, h.final_loss())),
        ),
        (
            "vae",
            h.vae.as_ref().and_then(|v| Some((v.first()?.total, v.last()?.total))),
        ),
    ];
    for (name, losses) in finals {
        if let Some((first, last)) = losses {
            println!("{name:<12} loss {first:.6} -> {last:.6}");
        }
    }
    run.write("histories.json", &json_text(h)?)?;
    run.finish()
}

fn view_kind(name: ViewName) -> ViewKind {
    match name {
        ViewName::Original => ViewKind::Original,
        ViewName::Linear => ViewKind::Linear,
        ViewName::Ae => ViewKind::Autoencoder,
        ViewName::Dae => ViewKind::Denoising,
        ViewName::Vae => ViewKind::Variational,
    }
}

fn with_vectors(data: &Dataset, vectors: &Matrix) -> Result<Dataset> {
    Dataset::from_records(
        data.records()
            .iter()
            .enumerate()
            .map(|(i, r)| EmbeddingRecord {
                vector: vectors.row(i).to_vec(),
                ..r.clone()
            })
            .collect(),
    )
}

fn augment(config: &PipelineConfig, args: &AugmentArgs) -> Result<()> {
    let mut names = if args.views.is_empty() {
        vec![ViewName::Linear, ViewName::Ae, ViewName::Dae, ViewName::Vae]
    } else {
        args.views.clone()
    };
    names.sort();
    names.dedup();
    let kinds: Vec<ViewKind> = names.iter().map(|&n| view_kind(n)).collect();
    let shorts: Vec<&str> = kinds.iter().map(|k| k.short_name()).collect();
    let mut run = Run::start(
        "augment",
        config.output_dir().join("views"),
        config,
        json!({ "views": shorts }),
    )?;
    let splits = load_splits(config, &mut run)?;
    let mut ctx = context(&splits.train, splits.test.as_ref(), config)?;
    let ckpt_dir = config.checkpoint_dir();
    let loaded = preload(&mut ctx, &ckpt_dir, &mut run)?;
    for (name, augmenter) in [
        (ViewName::Ae, Augmenter::Ae),
        (ViewName::Dae, Augmenter::Dae),
        (ViewName::Vae, Augmenter::Vae),
    ] {
        if names.contains(&name) && !loaded.contains(&augmenter) {
            return Err(Error::Usage(format!(
                "no {} checkpoint in {}; run train-aug first",
                view_kind(name).short_name(),
                ckpt_dir.display()
            )));
        }
    }
    for (split, data) in [(Split::Train, Some(&splits.train)), (Split::Test, splits.test.as_ref())] {
        let Some(data) = data else { continue };
        let prefix = if split == Split::Train { "train" } else { "test" };
        for &kind in &kinds {
            let view = with_vectors(data, ctx.view(split, kind)?)?;
            let name = format!("{prefix}.{}.jsonl", kind.short_name());
            write_records(&view, run.path(&name))?;
            run.record(&name)?;
            println!("{name}: {} records", view.len());
        }
    }
    run.finish()
}

fn train_clf(config: &PipelineConfig, args: &TrainClfArgs) -> Result<()> {
    let model: AblationConfig = args.model.parse()?;
    let slug = model.name().replace('/', "-");
    let dir = config.output_dir().join("train-clf").join(&slug);
    let mut run = Run::start("train-clf", dir, config, json!({ "model": model.name() }))?;
    let splits = load_splits(config, &mut run)?;
    let test = splits.test.as_ref().ok_or_else(|| {
        Error::Usage("train-clf needs test records: pass --test, set paths.test, or use --synthetic".into())
    })?;
    let mut ctx = context(&splits.train, Some(test), config)?;
    preload(&mut ctx, &config.checkpoint_dir(), &mut run)?;
    let (classifier, history) = ctx.fit(model)?;
    classifier.save(run.path("classifier.ckpt"))?;
    run.record("classifier.ckpt")?;

    let stack = ctx.stack(Split::Test, model.augmenters)?;
    let predictions = predict_from_logits(&classifier.logits(&stack)?);
    let truth = test.labels();
    let cm = confusion(&truth, &predictions.labels, NUM_CLASSES)?;
    let metrics = metrics_from_confusion(&cm)?;
    let report = json!({
        "model": model.name(),
        "test_samples": truth.len(),
        "metrics": metrics,
        "confusion": cm.rows(),
    });
    run.write("metrics.json", &json_text(&report)?)?;
    run.write("predictions.csv", &predictions_csv(&test.ids(), &truth, &predictions)?)?;
    if let Some(history) = &history {
        run.write("history.json", &json_text(history)?)?;
    }
    if let Some(trace) = classifier.attention_trace(&stack)? {
        run.write("attention.csv", &trace.to_csv(&test.ids(), stack.kinds())?)?;
    }
    println!(
        "{}: accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}",
        model.name(),
        metrics.accuracy,
        metrics.precision,
        metrics.recall,
        metrics.f1
    );
    run.finish()
}

fn ablate(config: &PipelineConfig, args: &AblateArgs) -> Result<()> {
    let configs = if args.configs.is_empty() {
        ablation_matrix()
    } else {
        args.configs
            .iter()
            .map(|c| c.parse())
            .collect::<Result<Vec<AblationConfig>>>()?
    };
    let names: Vec<String> = configs.iter().map(|c| c.name()).collect();
    let formats = match args.format {
        Some(f) => vec![f],
        None => vec![ReportFormat::Csv, ReportFormat::Markdown],
    };
    let mut run = Run::start(
        "ablate",
        config.output_dir().join("ablate"),
        config,
        json!({ "configs": names }),
    )?;
    let splits = load_splits(config, &mut run)?;
    let mut records = splits.train.records().to_vec();
    if let Some(test) = &splits.test {
        records.extend_from_slice(test.records());
    }
    let pool = Dataset::from_records(records)?;
    let plan = config.plan();
    let result = run_shuffled_benchmark(&pool, &plan, &configs, &config.pipeline, config.jobs)?;
    for format in formats {
        let text = render_report(&result, format)?;
        run.write(&format!("results.{}", format.extension()), &text)?;
    }
    run.write("results.json", &result.to_json()?)?;
    print!("{}", render_report(&result, ReportFormat::Markdown)?);
    run.finish()
}

fn gradcheck(config: &PipelineConfig, args: &GradcheckArgs) -> Result<ExitCode> {
    let components = if args.components.is_empty() {
        Component::ALL.to_vec()
    } else {
        args.components
            .iter()
            .map(|name| {
                Component::ALL.into_iter().find(|c| c.name() == name).ok_or_else(|| {
                    let known: Vec<&str> = Component::ALL.iter().map(|c| c.name()).collect();
                    Error::Usage(format!("unknown component {name:?}; known: {}", known.join(", ")))
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let mut suite = SuiteConfig {
        configs_per_component: args.per_component,
        base_seed: config.seed,
        ..SuiteConfig::default()
    };
    if let Some(t) = args.tolerance {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Usage(format!("tolerance {t} must be a non-negative number")));
        }
        suite.check.tolerance = t;
    }
    let names: Vec<&str> = components.iter().map(|c| c.name()).collect();
    let args_json = json!({
        "per_component": args.per_component,
        "tolerance": suite.check.tolerance,
        "components": names,
    });
    let mut run = Run::start("gradcheck", config.output_dir().join("gradcheck"), config, args_json)?;
    let reports = run_gradient_suite(&suite, &components)?;
    let table = render_suite_table(&reports);
    print!("{table}");
    run.write("gradcheck.txt", &table)?;
    run.write("gradcheck.json", &json_text(&reports)?)?;
    run.finish()?;
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.component.as_str())
        .collect();
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gradient check failed: {}", failed.join(", "));
        Ok(ExitCode::from(crate::EXIT_NUMERIC))
    }
}
