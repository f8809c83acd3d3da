//! Creativity evaluation for code-generating language models.
//!
//! Problems are made progressively harder by denying techniques a model
//! already used, then model solutions are judged in a sandbox and scored
//! for convergent and divergent creativity against human solutions.

pub mod cli;
pub mod client;
pub mod dataset;
pub mod denial;
pub mod detect;
pub mod metrics;
pub mod model;
pub mod prompts;
pub mod report;
pub mod sandbox;
pub mod toy;
