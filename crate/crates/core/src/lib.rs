#[macro_use]
mod tokens;

pub mod cluster;
pub mod encoding;
pub mod filter;
pub mod ingest;
pub mod issues;
pub mod maturity;
pub mod model;
pub mod pipeline;
pub mod validation;

pub use pipeline::{
    run_all, verify_manifest, Overrides, Phase, Pipeline, PipelineError, RunConfiguration,
    RunManifest,
};
pub use tokens::ParseTokenError;
