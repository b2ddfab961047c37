//! Balance-oriented game recommendation: category game graphs, preference and
//! popularity edge reweighting, LLM-description fusion, metrics and analyses.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the common instantiations.

pub mod analysis;
pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graphs;
pub mod linalg;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod prg;
pub mod scalar;
pub mod stats;
pub mod synthetic;
pub mod weighting;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Checkpoint64 = model::Checkpoint<f64>;
pub type Checkpoint32 = model::Checkpoint<f32>;
