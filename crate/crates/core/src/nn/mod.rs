//! A small from-scratch CNN engine at double precision.

mod network;
pub mod ops;
mod train;

use alloc::string::String;
use core::fmt;

pub use network::{ActivationCache, LayerParams, LayerSpec, NetworkState};
pub use train::{evaluate, train, EpochStats, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq)]
pub enum NnError {
    ShapeMismatch { op: &'static str, detail: String },
    LabelOutOfRange { label: usize, classes: usize },
    EmptyDataset,
    InvalidConfig(String),
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::ShapeMismatch { op, detail } => write!(f, "{op}: shape mismatch: {detail}"),
            NnError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            NnError::EmptyDataset => f.write_str("dataset is empty"),
            NnError::InvalidConfig(msg) => write!(f, "invalid training config: {msg}"),
        }
    }
}

impl core::error::Error for NnError {}
