//! Graph-based multi-label image classification from scene graphs and
//! commonsense knowledge graphs.

pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod graphs;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
