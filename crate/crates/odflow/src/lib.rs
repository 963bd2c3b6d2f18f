//! IO, configuration, and orchestration around `odflow-core`: file formats
//! for logs and matrices, the synthetic world generator, the report builder,
//! and the command-line surface.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod districts;
pub mod error;
pub mod odio;
pub mod pipeline;
pub mod reports;
pub mod synthgen;
