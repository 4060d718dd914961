//! Embedding-view augmentation, multi-head view attention and classification.
//!
//! The pipeline takes labeled sentence embeddings, derives extra views of
//! each one (uniform noise, autoencoder, denoising autoencoder and
//! variational autoencoder reconstructions), fuses the views with a
//! context-vector attention layer, and classifies the result with an LSTM or
//! a softmax regression. Everything is double precision, seeded, and
//! gradient-checked against central differences.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attention;
pub mod augment;
pub mod checkpoint;
pub mod classify;
pub mod data;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod manifest;
pub mod math;
pub mod verify;

pub use error::{Error, Result};
