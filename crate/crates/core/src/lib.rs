//! Generative debunking of climate misinformation with fact-myth-fallacy-fact
//! "truth sandwiches", and the human-evaluation statistics used to judge them.

pub mod agent;
pub mod corpus;
pub mod evaluation;
pub mod gateway;
pub mod pipeline;
pub mod prompt;
pub mod sandwich;
pub mod taxonomy;

pub use pipeline::{
    debunk, Corpora, DebunkRequest, DebunkResult, PipelineContext, PipelineError, Strategy,
};
pub use sandwich::TruthSandwich;
pub use taxonomy::Fallacy;
