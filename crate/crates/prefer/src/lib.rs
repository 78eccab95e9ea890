//! Automatic prompt ensemble engine.
//!
//! Builds an ensemble of task prompts by boosting: each round a prompt is
//! evaluated over a weighted training set with bilateral (forward/backward)
//! confidence bagging, its ensemble weight is computed from the weighted
//! error, hard examples are up-weighted, and a feedback-reflect-refine chain
//! produces the next round's prompt. The trained ensemble predicts by
//! weighted vote.

pub mod bagging;
pub mod boosting;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod persistence;
pub mod provider;
pub mod templates;
pub mod types;

pub use error::{Error, Result};
