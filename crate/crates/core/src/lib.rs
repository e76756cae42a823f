//! Patient-level knowledge graphs from relation-extraction triples, entropy
//! based informativeness analysis, and a dual-branch (text + graph)
//! multi-label document coder.
//!
//! The pipeline: [`ingest`] parses corpora and triple files, [`kg`] builds and
//! filters per-document graphs, [`entropy`] quantifies how much information a
//! serialized graph retains relative to its source text, [`model`] implements
//! the dual-branch classifier on top of the [`numerics`] matrix/tape
//! substrate, [`train`] runs the optimization loop, and [`metrics`] scores
//! multi-label predictions.

pub mod entropy;
pub mod ingest;
pub mod kg;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod train;

/// Dense matrix over `f64`, the working precision of the model and trainer.
pub type Matrix64 = numerics::Matrix<f64>;
/// Dense matrix over `f32`, for callers that trade precision for footprint.
pub type Matrix32 = numerics::Matrix<f32>;
