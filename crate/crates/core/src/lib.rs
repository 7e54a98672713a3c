//! Recurrent sentiment classifiers trained under a pool-based
//! active-learning loop, with human, LLM, or oracle label sources.

pub mod textprep;
pub mod nn;
pub mod models;
pub mod uncertainty;
pub mod annotators;
pub mod synthetic;
pub mod orchestrator;
