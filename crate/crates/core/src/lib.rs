//! Position-bias debiasing laboratory for click-through-rate prediction.
//!
//! The pipeline generates (or loads) learning-to-rank data, trains a
//! deliberately imperfect production ranker, simulates clicks under five
//! bias scenarios, trains debiasing models on the click logs and evaluates
//! how well each recovers document relevance.

pub mod config;
pub mod data;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod ranker;
pub mod sim;

pub use error::{Error, Result};
