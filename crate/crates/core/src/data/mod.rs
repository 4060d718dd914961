//! Embedding records, file formats, scaling, splitting and the shuffle protocol.

pub mod binary;
pub mod record;
pub mod scaler;
pub mod shuffle;
pub mod split;
pub mod synthetic;

pub use binary::{read_binary, write_binary};
pub use record::{
    encode_label, load_records, read_records, write_records, Dataset, EmbeddingRecord, CLASS_NAMES, DEFAULT_DIMENSION,
    NUM_CLASSES,
};
pub use scaler::{apply_minmax, fit_minmax, invert_minmax, MinMaxScaler};
pub use shuffle::{make_shuffle_plan, ShufflePlan, ShuffleRun};
pub use split::{stratified_split, stratified_split_indices};
pub use synthetic::generate_synthetic;
