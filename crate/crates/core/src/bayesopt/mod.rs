//! Model-based minimization on the unit cube: Latin hypercube start,
//! Gaussian-process (Kriging) surrogate and expected-improvement infill.

mod acquisition;
mod gp;
mod lhs;
pub mod linalg;
mod search;

pub use acquisition::{expected_improvement, normal_cdf, normal_pdf, propose_next, shifted_halton, ProposalConfig, Surrogate};
pub use gp::{
    gp_fit, grid_starts, log_marginal_likelihood, standardize, GpError, GpFitOptions, GpHyper, GpModel, KernelKind, MAX_NUGGET,
    MIN_NUGGET,
};
pub use lhs::{lhs_sample, LhsDesign};
pub use search::{bo_loop, BoConfig, Evaluation, Observation, ObservationLog, Outcome, Phase, Status};
