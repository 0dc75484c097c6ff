//! Multimodal driving-action prediction with generated explanations.
//!
//! Video, sensor and text branches feed a fusion layer shared by an action
//! classifier and a conditioned explanation decoder. Everything runs in f64 on
//! the CPU, with sample-level data parallelism through rayon when the
//! `parallel` feature is enabled.

pub mod cli;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod parallel;
pub mod params;
pub mod pipeline;
pub mod preprocess;
pub mod synthdata;
pub mod tensor;
pub mod training;
pub mod transformer;

pub use error::{Error, Result};
