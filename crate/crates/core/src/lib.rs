//! Gradual machine learning for aspect-level sentiment analysis.
//!
//! Easy instances are labeled from a sentiment lexicon, then the remaining
//! aspect units are labeled one at a time in order of decreasing evidential
//! support, each by inference over a factor graph whose evidence grows as
//! labels are added.

pub mod corpus;
pub mod easy;
pub mod embeddings;
pub mod engine;
pub mod error;
pub mod evidence;
pub mod features;
pub mod graph;
pub mod inference;
pub mod lexicon;
pub mod par;
pub mod sample;
pub mod synthetic;

pub use error::{Error, Result};
