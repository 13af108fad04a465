//! Single-step generative behaviour cloning.
//!
//! This crate trains generator policies with a conditional rejection-sampling
//! IMLE objective, runs them as receding-horizon controllers with temporal
//! consistency, and compares them against a rectified-flow baseline on
//! synthetic multimodal tasks. See the `book/` guide at the repository root
//! for a narrative walkthrough; its code snippets compile and run as part of
//! `cargo test`.

pub mod adam;
pub mod checkpoint;
pub mod dataset;
pub mod envs;
pub mod error;
pub mod flow;
pub mod imle;
pub mod metrics;
pub mod nn;
pub mod policy;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::DenseArray;
