//! Classification heads: an LSTM over views, softmax regression fit by
//! L-BFGS, and their attention-fused joint variants.

pub mod lbfgs;
pub mod lstm;
pub mod models;
pub mod predict;
pub mod softmax;
pub mod train;

pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsResult};
pub use lstm::{Lstm, LstmCache, LstmShape, DEFAULT_HIDDEN_DIM};
pub use models::{ConcatSoftmax, LstmClassifier, MageLstm, MageSoftmax, TrainedClassifier, ViewClassifier};
pub use predict::{argmax, predict_from_logits, predict_from_probabilities, predictions_csv, Predictions};
pub use softmax::{train_softmax, SoftmaxModel, DEFAULT_L2};
pub use train::{evaluate_loss, train_classifier, EpochRecord, Labeled, TrainConfig, TrainHistory};
