//! Experiment orchestration for the social perception workbench: config
//! parsing, run manifests, pipeline stages, and trajectory rendering.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod render;
