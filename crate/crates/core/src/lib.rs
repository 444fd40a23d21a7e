//! Contrastive-consistency evaluation for paired-video binary QA.
//!
//! Each benchmark item is a quadruple: a positive video and its
//! counterfactual, crossed with a mutually exclusive question pair. A model
//! is only credited when it answers Yes to (v⁺, q⁺) and No to the other
//! three cells. This crate loads manifests and predictions, computes the
//! consistency, classification, failure-mode and sensitivity metrics,
//! bootstraps them at scene level, and fuses paired logits for contrastive
//! decoding against an external model runner.

pub mod bootstrap;
pub mod decode;
pub mod diagnostics;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod report;

pub use error::{Error, Result};
pub use model::{AnswerLabel, Category, Cell, PredictionTable, Quadruple, QuadrupleId, Variant};
