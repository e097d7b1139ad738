//! Self-supervised similarity engine for network telemetry time series.
//!
//! The crate covers the full pipeline: raw telemetry is segmented and split
//! into similar pairs ([`data`]), a 1-D convolutional encoder is trained with
//! a temperature-scaled contrastive loss ([`nn`], [`train`]), and trained
//! embeddings answer top-k similar-situation queries by cosine similarity,
//! evaluated with MAP/Precision@k against an L2 baseline ([`retrieval`],
//! [`eval`]). A synthetic telemetry generator ([`synth`]) stands in for
//! production data so the whole experiment runs at desk scale.
//!
//! Inner loops are data-parallel over rayon when the default `parallel`
//! feature is enabled; without it everything runs sequentially with
//! identical results (see [`exec`]).

pub mod data;
pub mod error;
pub mod eval;
pub mod exec;
pub mod nn;
pub mod pipeline;
pub mod retrieval;
pub mod seeding;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
