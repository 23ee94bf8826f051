//! Gender-bias audit harness for masked language models.
//!
//! The pipeline renders a fixed prompt corpus per model, probes a fill-mask
//! backend for gendered-pronoun mass (GTC) and top-k completions, runs paired
//! nonparametric tests per job category, and compares monolingual against
//! multilingual models.

pub mod config;
pub mod corpus;
pub mod error;
pub mod gtc;
pub mod io;
pub mod lexical;
pub mod pipeline;
pub mod probe;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
