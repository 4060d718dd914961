//! Classifiers over view stacks, with and without attention fusion.

use super::lstm::{Lstm, LstmShape};
use super::softmax::SoftmaxModel;
use crate::attention::{mage_backward, mage_forward, AttentionTrace, MageParams};
use crate::augment::ViewStack;
use crate::checkpoint::{Checkpoint, Checkpointable};
use crate::error::{Error, Result};
use crate::math::{cross_entropy_loss, prefixed_names, Gradients, Matrix, Parameters};

/// A model trained by gradient descent on batches of view stacks.
pub trait ViewClassifier: Parameters + Clone {
    fn logits(&self, stack: &ViewStack) -> Result<Matrix>;

    /// Training objective (mean cross-entropy plus any penalty) and its
    /// gradient.
    fn loss_and_grad(&self, stack: &ViewStack, labels: &[usize]) -> Result<(f64, Gradients)>;

    /// Number of leading parameter blocks that belong to the attention layer.
    fn attention_blocks(&self) -> usize {
        0
    }

    fn attention_trace(&self, _stack: &ViewStack) -> Result<Option<AttentionTrace>> {
        Ok(None)
    }
}

fn sequence(stack: &ViewStack) -> Vec<&Matrix> {
    stack.views().iter().collect()
}

/// LSTM reading the views of each sample as a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmClassifier {
    pub lstm: Lstm,
}

impl Parameters for LstmClassifier {
    fn param_names(&self) -> Vec<String> {
        prefixed_names("lstm", &self.lstm)
    }

    fn params(&self) -> Vec<&[f64]> {
        self.lstm.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.lstm.params_mut()
    }
}

impl ViewClassifier for LstmClassifier {
    fn logits(&self, stack: &ViewStack) -> Result<Matrix> {
        Ok(self.lstm.forward(&sequence(stack))?.0)
    }

    fn loss_and_grad(&self, stack: &ViewStack, labels: &[usize]) -> Result<(f64, Gradients)> {
        let seq = sequence(stack);
        let (logits, cache) = self.lstm.forward(&seq)?;
        let (loss, grad) = cross_entropy_loss(&logits, labels)?;
        let (grads, _) = self.lstm.backward(&seq, &cache, &grad)?;
        Ok((loss, grads))
    }
}

/// Softmax regression on the concatenation of all views.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcatSoftmax {
    pub model: SoftmaxModel,
}

impl Parameters for ConcatSoftmax {
    fn param_names(&self) -> Vec<String> {
        prefixed_names("softmax", &self.model)
    }

    fn params(&self) -> Vec<&[f64]> {
        self.model.params()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.model.params_mut()
    }
}

impl ViewClassifier for ConcatSoftmax {
    fn logits(&self, stack: &ViewStack) -> Result<Matrix> {
        self.model.logits(&stack.concat_features())
    }

    fn loss_and_grad(&self, stack: &ViewStack, labels: &[usize]) -> Result<(f64, Gradients)> {
        self.model.objective(&stack.concat_features(), labels)
    }
}

/// Attention fusion followed by an LSTM over the single fused vector.
#[derive(Clone, Debug, PartialEq)]
pub struct MageLstm {
    pub mage: MageParams,
    pub lstm: Lstm,
}

impl Parameters for MageLstm {
    fn param_names(&self) -> Vec<String> {
        let mut n = prefixed_names("mage", &self.mage);
        n.extend(prefixed_names("lstm", &self.lstm));
        n
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.mage.params();
        p.extend(self.lstm.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.mage.params_mut();
        p.extend(self.lstm.params_mut());
        p
    }
}

impl ViewClassifier for MageLstm {
    fn logits(&self, stack: &ViewStack) -> Result<Matrix> {
        let (fused, _) = mage_forward(&self.mage, stack)?;
        Ok(self.lstm.forward(&[&fused])?.0)
    }

    fn loss_and_grad(&self, stack: &ViewStack, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (fused, mage_cache) = mage_forward(&self.mage, stack)?;
        let (logits, cache) = self.lstm.forward(&[&fused])?;
        let (loss, grad) = cross_entropy_loss(&logits, labels)?;
        let (lstm_grads, grad_inputs) = self.lstm.backward(&[&fused], &cache, &grad)?;
        let (mut grads, _) = mage_backward(&self.mage, stack, &mage_cache, &grad_inputs[0])?;
        grads.extend(lstm_grads);
        Ok((loss, grads))
    }

    fn attention_blocks(&self) -> usize {
        self.mage.params().len()
    }

    fn attention_trace(&self, stack: &ViewStack) -> Result<Option<AttentionTrace>> {
        Ok(Some(mage_forward(&self.mage, stack)?.1.trace().clone()))
    }
}

/// Attention fusion followed by softmax regression, trained jointly.
#[derive(Clone, Debug, PartialEq)]
pub struct MageSoftmax {
    pub mage: MageParams,
    pub head: SoftmaxModel,
}

impl Parameters for MageSoftmax {
    fn param_names(&self) -> Vec<String> {
        let mut n = prefixed_names("mage", &self.mage);
        n.extend(prefixed_names("softmax", &self.head));
        n
    }

    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.mage.params();
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.mage.params_mut();
        p.extend(self.head.params_mut());
        p
    }
}

impl ViewClassifier for MageSoftmax {
    fn logits(&self, stack: &ViewStack) -> Result<Matrix> {
        let (fused, _) = mage_forward(&self.mage, stack)?;
        self.head.logits(&fused)
    }

    fn loss_and_grad(&self, stack: &ViewStack, labels: &[usize]) -> Result<(f64, Gradients)> {
        let (fused, mage_cache) = mage_forward(&self.mage, stack)?;
        let logits = self.head.logits(&fused)?;
        let (ce, grad) = cross_entropy_loss(&logits, labels)?;
        let (head_grads, grad_fused) = self.head.backward(&fused, &grad)?;
        let (mut grads, _) = mage_backward(&self.mage, stack, &mage_cache, &grad_fused)?;
        grads.extend(head_grads);
        Ok((ce + self.head.penalty(), grads))
    }

    fn attention_blocks(&self) -> usize {
        self.mage.params().len()
    }

    fn attention_trace(&self, stack: &ViewStack) -> Result<Option<AttentionTrace>> {
        Ok(Some(mage_forward(&self.mage, stack)?.1.trace().clone()))
    }
}

/// Any trained classifier, as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum TrainedClassifier {
    Lstm(LstmClassifier),
    Softmax(SoftmaxModel),
    MageLstm(MageLstm),
    MageSoftmax(MageSoftmax),
}

impl TrainedClassifier {
    pub fn logits(&self, stack: &ViewStack) -> Result<Matrix> {
        match self {
            TrainedClassifier::Lstm(m) => m.logits(stack),
            TrainedClassifier::Softmax(m) => m.logits(&stack.concat_features()),
            TrainedClassifier::MageLstm(m) => m.logits(stack),
            TrainedClassifier::MageSoftmax(m) => m.logits(stack),
        }
    }

    pub fn attention_trace(&self, stack: &ViewStack) -> Result<Option<AttentionTrace>> {
        match self {
            TrainedClassifier::MageLstm(m) => m.attention_trace(stack),
            TrainedClassifier::MageSoftmax(m) => m.attention_trace(stack),
            _ => Ok(None),
        }
    }
}

fn push_lstm(ckpt: &mut Checkpoint, lstm: &Lstm) -> Result<()> {
    ckpt.set_meta("lstm", &lstm.shape())?;
    ckpt.push_params("lstm.", lstm);
    Ok(())
}

fn read_lstm(ckpt: &Checkpoint) -> Result<Lstm> {
    let shape: LstmShape = ckpt.meta("lstm")?;
    let mut lstm = Lstm::zeroed(shape)?;
    ckpt.fill_params("lstm.", &mut lstm)?;
    Ok(lstm)
}

fn push_mage(ckpt: &mut Checkpoint, mage: &MageParams) -> Result<()> {
    ckpt.set_meta("mage", &mage.layout())?;
    ckpt.push_params("mage.", mage);
    Ok(())
}

fn read_mage(ckpt: &Checkpoint) -> Result<MageParams> {
    let mut mage = MageParams::zeroed(ckpt.meta("mage")?)?;
    ckpt.fill_params("mage.", &mut mage)?;
    Ok(mage)
}

fn push_softmax(ckpt: &mut Checkpoint, model: &SoftmaxModel) -> Result<()> {
    ckpt.set_meta(
        "softmax",
        &serde_json::json!({
            "num_classes": model.num_classes(),
            "feature_dim": model.feature_dim(),
            "l2": model.l2,
        }),
    )?;
    ckpt.push_params("softmax.", model);
    Ok(())
}

fn read_softmax(ckpt: &Checkpoint) -> Result<SoftmaxModel> {
    let meta: serde_json::Value = ckpt.meta("softmax")?;
    let field = |k: &str| {
        meta.get(k)
            .cloned()
            .ok_or_else(|| Error::Schema(format!("softmax metadata lacks {k:?}")))
    };
    let k = field("num_classes")?.as_u64().unwrap_or(0) as usize;
    let f = field("feature_dim")?.as_u64().unwrap_or(0) as usize;
    let l2 = field("l2")?.as_f64().unwrap_or(-1.0);
    let mut model = SoftmaxModel::zeros(k, f, l2)?;
    ckpt.fill_params("softmax.", &mut model)?;
    Ok(model)
}

impl Checkpointable for TrainedClassifier {
    const KIND: &'static str = "classifier";

    fn to_checkpoint(&self) -> Result<Checkpoint> {
        let mut ckpt = Checkpoint::new(Self::KIND);
        let variant = match self {
            TrainedClassifier::Lstm(m) => {
                push_lstm(&mut ckpt, &m.lstm)?;
                "lstm"
            }
            TrainedClassifier::Softmax(m) => {
                push_softmax(&mut ckpt, m)?;
                "softmax"
            }
            TrainedClassifier::MageLstm(m) => {
                push_mage(&mut ckpt, &m.mage)?;
                push_lstm(&mut ckpt, &m.lstm)?;
                "mage_lstm"
            }
            TrainedClassifier::MageSoftmax(m) => {
                push_mage(&mut ckpt, &m.mage)?;
                push_softmax(&mut ckpt, &m.head)?;
                "mage_softmax"
            }
        };
        ckpt.set_meta("variant", &variant)?;
        Ok(ckpt)
    }

    fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let variant: String = ckpt.meta("variant")?;
        Ok(match variant.as_str() {
            "lstm" => TrainedClassifier::Lstm(LstmClassifier { lstm: read_lstm(ckpt)? }),
            "softmax" => TrainedClassifier::Softmax(read_softmax(ckpt)?),
            "mage_lstm" => TrainedClassifier::MageLstm(MageLstm {
                mage: read_mage(ckpt)?,
                lstm: read_lstm(ckpt)?,
            }),
            "mage_softmax" => TrainedClassifier::MageSoftmax(MageSoftmax {
                mage: read_mage(ckpt)?,
                head: read_softmax(ckpt)?,
            }),
            other => return Err(Error::Schema(format!("unknown classifier variant {other:?}"))),
        })
    }
}
