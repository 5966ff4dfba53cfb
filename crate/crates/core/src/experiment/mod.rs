//! Config-driven experiments over a generator zoo.

pub mod config;
pub mod manifest;
pub mod runner;
pub mod zoo;

pub use config::ExperimentConfig;
pub use manifest::RunManifest;
pub use runner::{cmd_analyze, cmd_attack, cmd_generate, cmd_verify, Corpus, Experiment};
