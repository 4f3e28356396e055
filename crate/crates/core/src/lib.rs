//! RetroGAN: adversarial post-specialization of word embeddings.
//!
//! A pair of generators learns to map distributional word vectors (X) into
//! a retrofitted space (Y) and back, so that words missing from the
//! retrofitting lexicon can still be moved into the specialized space.
//! The crate provides the dense-network primitives, the six-network model,
//! its losses and optimizers, a deterministic trainer with checkpoints,
//! the embedding text format, and the word-similarity evaluation harness.

pub mod checkpoint;
pub mod config;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod losses;
pub mod models;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Matrix;
