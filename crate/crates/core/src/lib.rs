//! Translation of laboratory protocols into a restricted pseudocode language
//! and structural evaluation of models that plan with it.

pub mod dataset;
pub mod dsl;
pub mod embedding;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod prompts;
pub mod retrieval;
pub mod teacher;
