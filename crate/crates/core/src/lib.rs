pub mod ingest;
pub mod error;
pub mod scoring;
pub mod features;
pub mod models;
pub mod causal;
pub mod report;
pub mod synth;
pub mod workflow;
