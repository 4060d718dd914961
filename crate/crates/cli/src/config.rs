//! Resolved configuration: preset defaults, then the config file, then flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mage_core::data::ShufflePlan;
use mage_core::eval::PipelineSettings;
use mage_core::manifest::Manifest;
use mage_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cli::GlobalArgs;

/// Environment variable naming the output directory when neither the
/// config file nor `--output` does.
pub const OUTPUT_ENV: &str = "MAGE_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "mage-out";

/// Base hyperparameters that the config file and flags then override.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Network sizes and schedules for 768-dimensional sentence embeddings.
    Full,
    /// Narrow networks and short schedules for small synthetic data.
    Desk,
}

impl Preset {
    pub fn settings(self) -> PipelineSettings {
        match self {
            Preset::Full => PipelineSettings::full_scale(),
            Preset::Desk => PipelineSettings::desk(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Augmenter checkpoints; defaults to `<output_dir>/checkpoints`.
    pub checkpoint_dir: Option<PathBuf>,
}

/// Gaussian clusters used instead of record files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticData {
    pub enabled: bool,
    pub classes: usize,
    pub dimension: usize,
    pub per_class: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticData {
    fn default() -> Self {
        SyntheticData {
            enabled: false,
            classes: 3,
            dimension: 16,
            per_class: 40,
            separation: 10.0,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Benchmark {
    pub n_shuffles: usize,
    pub n_iterations: usize,
}

impl Default for Benchmark {
    fn default() -> Self {
        Benchmark {
            n_shuffles: 4,
            n_iterations: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preset: Preset,
    /// Seed of every model; the benchmark derives per-run seeds from it.
    pub seed: u64,
    pub jobs: usize,
    pub paths: Paths,
    pub synthetic: SyntheticData,
    pub benchmark: Benchmark,
    pub pipeline: PipelineSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::with_preset(Preset::Full)
    }
}

impl PipelineConfig {
    pub fn with_preset(preset: Preset) -> Self {
        PipelineConfig {
            preset,
            seed: 0,
            jobs: 1,
            paths: Paths::default(),
            synthetic: SyntheticData::default(),
            benchmark: Benchmark::default(),
            pipeline: preset.settings(),
        }
    }

    pub fn plan(&self) -> ShufflePlan {
        ShufflePlan {
            n_shuffles: self.benchmark.n_shuffles,
            n_iterations: self.benchmark.n_iterations,
            base_seed: self.seed,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths
            .output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.paths
            .checkpoint_dir
            .clone()
            .unwrap_or_else(|| self.output_dir().join("checkpoints"))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.plan().validate()?;
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        let s = &self.synthetic;
        if s.enabled && (s.dimension == 0 || s.per_class < 2 || !(s.separation >= 0.0)) {
            return Err(Error::Config(
                "synthetic data needs dimension >= 1, per_class >= 2 and a non-negative separation".into(),
            ));
        }
        Ok(())
    }
}

/// Reads a TOML config file, or the configuration recorded in a run
/// manifest when the file is JSON.
fn read_config_file(path: &Path) -> Result<Value> {
    if path.extension().is_some_and(|e| e == "json") {
        let manifest = Manifest::load(path)?;
        return manifest
            .config
            .get("config")
            .cloned()
            .ok_or_else(|| Error::Config(format!("{}: manifest has no resolved config", path.display())));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::to_value(table).map_err(|e| Error::Config(e.to_string()))
}

/// Overlays `top` onto `base`, descending into tables present in both.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn lookup<'a>(value: &'a Value, path: &[&str]) -> Option<&'a Value> {
    path.iter().try_fold(value, |v, k| v.get(k))
}

fn to_json(value: &impl Serialize) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| Error::Config(e.to_string()))
}

/// Defaults of the chosen preset, overlaid by the config file, overlaid by
/// flags. `env_output` stands in for the output-directory variable.
pub fn resolve(args: &GlobalArgs, env_output: Option<PathBuf>) -> Result<PipelineConfig> {
    let file = match &args.config {
        Some(path) => read_config_file(path).map_err(|e| e.context(format!("config {}", path.display())))?,
        None => Value::Object(Default::default()),
    };
    let file_synthetic = lookup(&file, &["synthetic", "enabled"]).and_then(Value::as_bool) == Some(true);
    let file_preset = match lookup(&file, &["preset"]) {
        Some(v) => {
            Some(serde_json::from_value::<Preset>(v.clone()).map_err(|e| Error::Config(format!("preset: {e}")))?)
        }
        None => None,
    };
    let preset = args
        .preset
        .or(file_preset)
        .unwrap_or(if args.synthetic || file_synthetic {
            Preset::Desk
        } else {
            Preset::Full
        });

    let mut merged = to_json(&PipelineConfig::with_preset(preset))?;
    merge(&mut merged, file);
    let mut config: PipelineConfig =
        serde_json::from_value(merged).map_err(|e| Error::Config(format!("invalid configuration: {e}")))?;
    config.preset = preset;

    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    if args.synthetic {
        config.synthetic.enabled = true;
    }
    for (flag, slot) in [
        (&args.train, &mut config.paths.train),
        (&args.test, &mut config.paths.test),
        (&args.checkpoints, &mut config.paths.checkpoint_dir),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    config.paths.output_dir = args
        .output
        .clone()
        .or(config.paths.output_dir.take())
        .or(env_output)
        .or_else(|| Some(PathBuf::from(DEFAULT_OUTPUT_DIR)));
    config.validate()?;
    Ok(config)
}
