//! One run of the augmentation pipeline: augmenters trained on the training
//! split, views built for both splits, then one classifier per configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics_from_confusion, MetricsRecord};
use crate::attention::{AttentionConfig, MageParams};
use crate::augment::{
    linear_transform, train_autoencoder, train_dae, train_vae, AeConfig, AutoencoderModel, Corruption, DenoisingConfig,
    DenoisingModel, LinearNoiseConfig, Reconstruct, ReconstructionHistory, VaeConfig, VaeHistory, VaeModel, ViewKind,
    ViewStack,
};
use crate::classify::{
    predict_from_logits, train_classifier, train_softmax, Labeled, LbfgsConfig, Lstm, LstmClassifier, LstmShape,
    MageLstm, MageSoftmax, SoftmaxModel, TrainConfig, TrainHistory, TrainedClassifier, DEFAULT_HIDDEN_DIM, DEFAULT_L2,
};
use crate::data::{stratified_split_indices, Dataset, MinMaxScaler, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmenterSet {
    Original,
    WithDae,
    WithVae,
}

impl AugmenterSet {
    /// Views fed to the classifier, in stack order.
    pub fn views(self) -> &'static [ViewKind] {
        use ViewKind::*;
        match self {
            AugmenterSet::Original => &[Original],
            AugmenterSet::WithDae => &[Original, Linear, Autoencoder, Denoising],
            AugmenterSet::WithVae => &[Original, Linear, Autoencoder, Variational],
        }
    }

    fn short_name(self) -> &'static str {
        match self {
            AugmenterSet::Original => "original",
            AugmenterSet::WithDae => "dae",
            AugmenterSet::WithVae => "vae",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Lstm,
    Softmax,
}

impl ClassifierKind {
    fn short_name(self) -> &'static str {
        match self {
            ClassifierKind::Lstm => "lstm",
            ClassifierKind::Softmax => "softmax",
        }
    }
}

/// One cell of the ablation matrix. Named `classifier/augmenters`, for
/// example `lstm/original`, `softmax/with-dae` or `lstm/mage+vae`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AblationConfig {
    pub augmenters: AugmenterSet,
    pub attention: bool,
    pub classifier: ClassifierKind,
}

impl AblationConfig {
    pub fn new(augmenters: AugmenterSet, attention: bool, classifier: ClassifierKind) -> Self {
        AblationConfig {
            augmenters,
            attention,
            classifier,
        }
    }

    pub fn name(&self) -> String {
        self.to_string()
    }

    pub fn is_baseline(&self) -> bool {
        self.augmenters == AugmenterSet::Original && !self.attention
    }

    /// The same augmenters and classifier without attention.
    pub fn without_attention(&self) -> AblationConfig {
        AblationConfig {
            attention: false,
            ..*self
        }
    }

    pub fn baseline(&self) -> AblationConfig {
        AblationConfig::new(AugmenterSet::Original, false, self.classifier)
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let aug = self.augmenters.short_name();
        match (self.attention, self.augmenters) {
            (true, _) => write!(f, "{}/mage+{aug}", self.classifier.short_name()),
            (false, AugmenterSet::Original) => write!(f, "{}/original", self.classifier.short_name()),
            (false, _) => write!(f, "{}/with-{aug}", self.classifier.short_name()),
        }
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("unknown ablation config {s:?}; expected e.g. lstm/mage+dae"));
        let (classifier, rest) = s.split_once('/').ok_or_else(bad)?;
        let classifier = match classifier {
            "lstm" => ClassifierKind::Lstm,
            "softmax" => ClassifierKind::Softmax,
            _ => return Err(bad()),
        };
        let (attention, aug) = match rest {
            "original" => (false, "original"),
            _ => match (rest.strip_prefix("mage+"), rest.strip_prefix("with-")) {
                (Some(a), _) => (true, a),
                (_, Some(a)) => (false, a),
                _ => return Err(bad()),
            },
        };
        let augmenters = match aug {
            "original" => AugmenterSet::Original,
            "dae" => AugmenterSet::WithDae,
            "vae" => AugmenterSet::WithVae,
            _ => return Err(bad()),
        };
        let config = AblationConfig::new(augmenters, attention, classifier);
        if config.to_string() != s {
            return Err(bad());
        }
        Ok(config)
    }
}

/// The five ablation columns for one classifier: original, with DAE, with
/// VAE, and the two attention-fused variants.
pub fn standard_configs(classifier: ClassifierKind) -> Vec<AblationConfig> {
    use AugmenterSet::*;
    [
        (Original, false),
        (WithDae, false),
        (WithVae, false),
        (WithDae, true),
        (WithVae, true),
    ]
    .into_iter()
    .map(|(a, att)| AblationConfig::new(a, att, classifier))
    .collect()
}

/// Five configurations for each of the two classifiers, LSTM first.
pub fn ablation_matrix() -> Vec<AblationConfig> {
    let mut configs = standard_configs(ClassifierKind::Lstm);
    configs.extend(standard_configs(ClassifierKind::Softmax));
    configs
}

/// Every hyperparameter of the pipeline apart from data and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub noise: LinearNoiseConfig,
    pub autoencoder: AeConfig,
    pub corruption: Corruption,
    pub vae: VaeConfig,
    pub attention: AttentionConfig,
    pub lstm_hidden: usize,
    pub training: TrainConfig,
    pub lbfgs: LbfgsConfig,
    pub l2: f64,
    /// Share of each class in the training split held out for early stopping.
    pub val_fraction: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            noise: LinearNoiseConfig::default(),
            autoencoder: AeConfig::default(),
            corruption: Corruption::default(),
            vae: VaeConfig::default(),
            attention: AttentionConfig::default(),
            lstm_hidden: DEFAULT_HIDDEN_DIM,
            training: TrainConfig::default(),
            lbfgs: LbfgsConfig::default(),
            l2: DEFAULT_L2,
            val_fraction: 0.1,
        }
    }
}

impl PipelineSettings {
    /// Full-size defaults for 768-dimensional embeddings.
    pub fn full_scale() -> Self {
        PipelineSettings::default()
    }

    /// Narrow networks and short schedules for small synthetic data; the
    /// full ablation finishes in about a minute on one core.
    pub fn desk() -> Self {
        PipelineSettings {
            autoencoder: AeConfig {
                hidden: vec![24, 16],
                latent: 8,
                epochs: 15,
                batch_size: 32,
                ..AeConfig::default()
            },
            vae: VaeConfig {
                hidden: 32,
                latent: 16,
                epochs: 15,
                batch_size: 32,
                ..VaeConfig::default()
            },
            lstm_hidden: 16,
            training: TrainConfig {
                lr: 0.01,
                max_epochs: 30,
                ..TrainConfig::default()
            },
            lbfgs: LbfgsConfig {
                max_iterations: 200,
                ..LbfgsConfig::default()
            },
            ..PipelineSettings::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.autoencoder.validate()?;
        self.corruption.validate()?;
        self.vae.validate()?;
        self.training.validate()?;
        self.lbfgs.validate()?;
        if self.attention.num_heads == 0 || !(self.attention.temperature > 0.0) {
            return Err(Error::Config(
                "attention needs >= 1 head and a positive temperature".into(),
            ));
        }
        if self.lstm_hidden == 0 {
            return Err(Error::Config("lstm_hidden must be >= 1".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 {} must be non-negative", self.l2)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction {} outside (0, 1)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Loss curves of the augmenters a [`RunContext`] trained itself.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmenterHistories {
    pub autoencoder: Option<ReconstructionHistory>,
    pub denoising: Option<ReconstructionHistory>,
    pub vae: Option<VaeHistory>,
}

/// Augmenters and views of one run, trained and built on first use so that
/// configurations sharing them within a run reuse the same models. Each
/// model draws from its own named stream, so results do not depend on which
/// configuration asked first.
pub struct RunContext<'a> {
    settings: &'a PipelineSettings,
    rng: Rng,
    train: Matrix,
    test: Matrix,
    train_labels: Vec<usize>,
    fit_indices: Vec<usize>,
    val_indices: Vec<usize>,
    scaler: MinMaxScaler,
    autoencoder: Option<AutoencoderModel>,
    denoising: Option<DenoisingModel>,
    vae: Option<VaeModel>,
    histories: AugmenterHistories,
    views: BTreeMap<(Split, ViewKind), Matrix>,
}

impl<'a> RunContext<'a> {
    pub fn new(train: &Dataset, test: &Dataset, settings: &'a PipelineSettings, seed: u64) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::Usage("training and test splits must be nonempty".into()));
        }
        Self::build(train, Some(test), settings, seed)
    }

    /// A context without a test split; test views are empty.
    pub fn train_only(train: &Dataset, settings: &'a PipelineSettings, seed: u64) -> Result<Self> {
        Self::build(train, None, settings, seed)
    }

    fn build(train: &Dataset, test: Option<&Dataset>, settings: &'a PipelineSettings, seed: u64) -> Result<Self> {
        settings.validate()?;
        if train.is_empty() {
            return Err(Error::Usage("training split must be nonempty".into()));
        }
        let dim = train.dimension().unwrap_or(0);
        let test = match test {
            Some(t) => t.vectors(),
            None => Matrix::zeros(0, dim),
        };
        if test.cols() != dim {
            return Err(Error::shape("test dimension", dim, test.cols()));
        }
        let rng = Rng::new(seed);
        let train_labels = train.labels();
        let (fit_indices, val_indices) =
            stratified_split_indices(&train_labels, settings.val_fraction, &mut rng.fork_named("validation"))
                .map_err(|e| e.context("validation split"))?;
        let train_x = train.vectors();
        let scaler = MinMaxScaler::fit(&train_x)?;
        Ok(RunContext {
            settings,
            rng,
            train: train_x,
            test,
            train_labels,
            fit_indices,
            val_indices,
            scaler,
            autoencoder: None,
            denoising: None,
            vae: None,
            histories: AugmenterHistories::default(),
            views: BTreeMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.train.cols()
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_labels
    }

    pub fn histories(&self) -> &AugmenterHistories {
        &self.histories
    }

    /// Rejects a stored augmenter whose scaler was not fit on this
    /// context's training split.
    fn check_scaler(&self, what: &str, scaler: &MinMaxScaler) -> Result<()> {
        if *scaler != self.scaler {
            return Err(Error::Usage(format!(
                "{what} checkpoint was trained on different training data"
            )));
        }
        Ok(())
    }

    pub fn preload_autoencoder(&mut self, model: AutoencoderModel) -> Result<()> {
        self.check_scaler("autoencoder", model.scaler())?;
        self.autoencoder = Some(model);
        Ok(())
    }

    pub fn preload_denoising(&mut self, model: DenoisingModel) -> Result<()> {
        self.check_scaler("denoising autoencoder", model.autoencoder.scaler())?;
        self.denoising = Some(model);
        Ok(())
    }

    pub fn preload_vae(&mut self, model: VaeModel) -> Result<()> {
        self.check_scaler("VAE", model.scaler())?;
        self.vae = Some(model);
        Ok(())
    }

    fn scaled_train(&self) -> Result<Matrix> {
        self.scaler.apply(&self.train)
    }

    pub fn autoencoder(&mut self) -> Result<&AutoencoderModel> {
        if self.autoencoder.is_none() {
            let (model, history) = train_autoencoder(
                &self.scaled_train()?,
                self.scaler.clone(),
                &self.settings.autoencoder,
                &mut self.rng.fork_named("autoencoder"),
            )
            .map_err(|e| e.context("autoencoder training"))?;
            self.autoencoder = Some(model);
            self.histories.autoencoder = Some(history);
        }
        Ok(self.autoencoder.as_ref().expect("trained above"))
    }

    pub fn denoising(&mut self) -> Result<&DenoisingModel> {
        if self.denoising.is_none() {
            let config = DenoisingConfig {
                corruption: self.settings.corruption,
                autoencoder: self.settings.autoencoder.clone(),
            };
            let (model, history) = train_dae(
                &self.scaled_train()?,
                self.scaler.clone(),
                &config,
                &mut self.rng.fork_named("denoising"),
            )
            .map_err(|e| e.context("denoising autoencoder training"))?;
            self.denoising = Some(model);
            self.histories.denoising = Some(history);
        }
        Ok(self.denoising.as_ref().expect("trained above"))
    }

    pub fn vae(&mut self) -> Result<&VaeModel> {
        if self.vae.is_none() {
            let (model, history) = train_vae(
                &self.scaled_train()?,
                self.scaler.clone(),
                &self.settings.vae,
                &mut self.rng.fork_named("vae"),
            )
            .map_err(|e| e.context("VAE training"))?;
            self.vae = Some(model);
            self.histories.vae = Some(history);
        }
        Ok(self.vae.as_ref().expect("trained above"))
    }

    fn raw(&self, split: Split) -> &Matrix {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn view(&mut self, split: Split, kind: ViewKind) -> Result<&Matrix> {
        if !self.views.contains_key(&(split, kind)) {
            let view = match kind {
                ViewKind::Original => self.raw(split).clone(),
                ViewKind::Linear => {
                    let mut rng = self.rng.fork_named(&format!("linear/{}", split.name()));
                    linear_transform(self.raw(split), &self.settings.noise, &mut rng)?
                }
                ViewKind::Autoencoder => {
                    let raw = self.raw(split).clone();
                    self.autoencoder()?.reconstruct(&raw)?
                }
                ViewKind::Denoising => {
                    let raw = self.raw(split).clone();
                    self.denoising()?.reconstruct(&raw)?
                }
                ViewKind::Variational => {
                    let raw = self.raw(split).clone();
                    self.vae()?.reconstruct(&raw)?
                }
            };
            self.views.insert((split, kind), view);
        }
        Ok(&self.views[&(split, kind)])
    }

    pub fn stack(&mut self, split: Split, augmenters: AugmenterSet) -> Result<ViewStack> {
        let kinds = augmenters.views();
        let mut views = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            views.push(self.view(split, kind)?.clone());
        }
        ViewStack::from_parts(kinds.to_vec(), views)
    }

    /// Trains the configured classifier on the training split and scores it
    /// on the test split.
    pub fn evaluate(&mut self, config: AblationConfig, test_labels: &[usize]) -> Result<MetricsRecord> {
        let (model, _) = self.fit(config)?;
        let test = self.stack(Split::Test, config.augmenters)?;
        let predicted = predict_from_logits(&model.logits(&test)?).labels;
        metrics_from_confusion(&confusion(test_labels, &predicted, NUM_CLASSES)?)
    }

    pub fn fit(&mut self, config: AblationConfig) -> Result<(TrainedClassifier, Option<TrainHistory>)> {
        let stack = self.stack(Split::Train, config.augmenters)?;
        let mut rng = self.rng.fork_named(&format!("classifier/{config}"));
        fit_classifier(
            config,
            &stack,
            &self.train_labels,
            (&self.fit_indices, &self.val_indices),
            self.settings,
            &mut rng,
        )
    }
}

/// Fits one classifier on `stack`. The plain softmax is fit by L-BFGS on
/// every training sample; the other heads train by Adam on the `fit` part
/// and stop early on the `val` part.
pub fn fit_classifier(
    config: AblationConfig,
    stack: &ViewStack,
    labels: &[usize],
    (fit, val): (&[usize], &[usize]),
    settings: &PipelineSettings,
    rng: &mut Rng,
) -> Result<(TrainedClassifier, Option<TrainHistory>)> {
    let dim = stack.dim();
    let shape = LstmShape {
        input_dim: dim,
        hidden_dim: settings.lstm_hidden,
        num_classes: NUM_CLASSES,
    };
    if let (ClassifierKind::Softmax, false) = (config.classifier, config.attention) {
        let (model, _) = train_softmax(
            &stack.concat_features(),
            labels,
            NUM_CLASSES,
            settings.l2,
            &settings.lbfgs,
            None,
        )?;
        return Ok((TrainedClassifier::Softmax(model), None));
    }
    let fit_stack = stack.select(fit);
    let fit_labels: Vec<usize> = fit.iter().map(|&i| labels[i]).collect();
    let val_stack = stack.select(val);
    let val_labels: Vec<usize> = val.iter().map(|&i| labels[i]).collect();
    let train = Labeled::new(&fit_stack, &fit_labels)?;
    let val = Labeled::new(&val_stack, &val_labels)?;
    let cfg = &settings.training;
    let mut init = rng.fork_named("init");
    let mut order = rng.fork_named("batches");
    Ok(match config.classifier {
        ClassifierKind::Lstm if config.attention => {
            let mut model = MageLstm {
                mage: MageParams::from_config(&settings.attention, dim, &mut init)?,
                lstm: Lstm::new(shape, &mut init)?,
            };
            let history = train_classifier(&mut model, train, val, cfg, &mut order)?;
            (TrainedClassifier::MageLstm(model), Some(history))
        }
        ClassifierKind::Lstm => {
            let mut model = LstmClassifier {
                lstm: Lstm::new(shape, &mut init)?,
            };
            let history = train_classifier(&mut model, train, val, cfg, &mut order)?;
            (TrainedClassifier::Lstm(model), Some(history))
        }
        ClassifierKind::Softmax => {
            let mut model = MageSoftmax {
                mage: MageParams::from_config(&settings.attention, dim, &mut init)?,
                head: SoftmaxModel::zeros(NUM_CLASSES, dim, settings.l2)?,
            };
            let history = train_classifier(&mut model, train, val, cfg, &mut order)?;
            (TrainedClassifier::MageSoftmax(model), Some(history))
        }
    })
}

/// Runs every configuration on one train/test pair with one seed. Errors
/// name the failing configuration.
pub fn run_configs(
    train: &Dataset,
    test: &Dataset,
    configs: &[AblationConfig],
    settings: &PipelineSettings,
    seed: u64,
) -> Result<Vec<MetricsRecord>> {
    let mut ctx = RunContext::new(train, test, settings, seed)?;
    let test_labels = test.labels();
    configs
        .iter()
        .map(|&c| {
            ctx.evaluate(c, &test_labels)
                .map_err(|e| e.context(format!("config {c}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_names_round_trip() {
        for c in ablation_matrix() {
            assert_eq!(c.name().parse::<AblationConfig>().unwrap(), c);
        }
        let names: Vec<String> = standard_configs(ClassifierKind::Lstm)
            .iter()
            .map(|c| c.name())
            .collect();
        assert_eq!(
            names,
            [
                "lstm/original",
                "lstm/with-dae",
                "lstm/with-vae",
                "lstm/mage+dae",
                "lstm/mage+vae"
            ]
        );
        assert!("lstm/with-original".parse::<AblationConfig>().is_err());
        assert!("cnn/original".parse::<AblationConfig>().is_err());
    }

    #[test]
    fn view_order_is_canonical() {
        assert_eq!(AugmenterSet::Original.views(), &[ViewKind::Original]);
        assert_eq!(AugmenterSet::WithVae.views()[3], ViewKind::Variational);
    }

    #[test]
    fn presets_validate() {
        PipelineSettings::full_scale().validate().unwrap();
        PipelineSettings::desk().validate().unwrap();
    }
}
