//! Carbon-aware temporal workload shifting for data centers: regional grid
//! carbon-intensity signals computed from generation and import data,
//! shifting-potential analytics, and simulation of deadline-constrained
//! scheduling strategies against perfect or noisy intensity forecasts.
//!
//! The crate is organized along the pipeline:
//!
//! - [`gridmodel`]: ingest generation/import CSVs and derive the
//!   consumption-weighted carbon-intensity signal of a region.
//! - [`forecast`]: perfect and Gaussian-noise forecast views over a signal.
//! - [`potential`]: theoretical shifting-potential analytics.
//! - [`workload`]: job model and the two scenario generators.
//! - [`scheduler`]: slot assignment strategies and emissions accounting.
//! - [`experiment`]: orchestration, repetitions, savings statistics,
//!   result emission, and an exhaustive oracle for testing.
//!
//! All types are immutable after construction and all randomness is seeded,
//! so identical inputs reproduce identical results.

pub mod error;
pub mod experiment;
pub mod forecast;
pub mod gridmodel;
pub mod potential;
pub mod scheduler;
pub mod timegrid;
pub mod workload;

pub use error::{Error, Result};
