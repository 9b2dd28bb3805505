//! Core algorithms for fast CNN architecture selection.
//!
//! Everything here is `no_std` + `alloc`: the CNN engine ([`nn`]), the
//! in-memory dataset helpers ([`data`]), the architecture search space
//! ([`archspace`]), the per-seed training procedures behind the three
//! performance estimators ([`estimate`]) and the Kriging / expected
//! improvement optimizer ([`bayesopt`]). File formats, timing, threads and
//! the CLI live in the `archsel` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod archspace;
pub mod bayesopt;
pub mod data;
pub mod estimate;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use tensor::Tensor;
