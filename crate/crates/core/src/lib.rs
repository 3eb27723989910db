//! Toolkit for Boolean set-operation retrieval experiments.
//!
//! * [`query`]: the seven query templates and their text syntax
//! * [`corpus`], [`vocab`]: records, file formats and the attribute vocabulary
//! * [`datagen`]: rule-based triplet data and synthetic benchmarks
//! * [`encoder`], [`losses`], [`optim`], [`trainer`]: the trainable dual encoder
//! * [`retrieval`], [`metrics`]: BM25, dense and oracle retrievers plus Recall/MRecall
//! * [`experiment`]: the end-to-end comparison pipeline

pub mod checkpoint;
pub mod corpus;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod metrics;
pub mod optim;
pub mod query;
pub mod retrieval;
pub mod seed;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
