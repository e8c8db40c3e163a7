//! File formats, experiment execution, reports and the study HTTP service
//! for dataset-classification bias audits. The algorithms live in
//! `biasaudit-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod digest;
pub mod error;
pub mod experiment;
pub mod features;
pub mod ingest;
pub mod manifest;
pub mod reference;
pub mod report;
pub mod store;
pub mod study_server;
pub mod suite;

pub use error::{Error, Result};
