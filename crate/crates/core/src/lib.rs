//! Self-supervised multi-object tracking toolkit.
//!
//! The crate trains a small appearance-embedding network without identity
//! labels by enforcing that soft detection assignments stay consistent across
//! short and long temporal gaps, then uses the learned embeddings inside a
//! two-stage detection-association tracker. Everything runs on synthetic
//! sequences with known ground truth, so every stage — embedding, training,
//! tracking, evaluation — is verifiable end to end.

pub mod assignment;
pub mod config;
pub mod embedder;
pub mod error;
pub mod hungarian;
pub mod kalman;
pub mod loss;
pub mod metrics;
pub mod mot_io;
pub mod optim;
pub mod pixmap;
pub mod rng;
pub mod synth;
pub mod tracker;
pub mod train;
pub mod types;

pub use error::{Error, Result};
