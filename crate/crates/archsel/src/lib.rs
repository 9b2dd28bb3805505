//! File formats, timed estimators, experiment configuration and the
//! correlation, timing and search harness around `archsel-core`.

pub mod config;
pub mod datasets;
pub mod estimators;
pub mod harness;
pub mod report;

pub use archsel_core as core;
