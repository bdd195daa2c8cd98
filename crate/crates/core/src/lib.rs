//! Keyword-assisted embedded topic model.
//!
//! Pipeline: [`corpus`] turns raw text into a vocabulary and bag-of-words
//! counts, [`embeddings`] trains or loads word vectors, [`prior`] expands
//! seed words into a binary keyword prior, [`model`] trains the topic model
//! on top of the [`diff`] engine and [`eval`] scores the result.

pub mod corpus;
pub mod diff;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod model;
pub mod par;
pub mod prior;
pub mod synth;

pub use error::{Error, Result};
pub use par::ExecMode;
