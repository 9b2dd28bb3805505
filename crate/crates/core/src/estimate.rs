//! Candidate-performance estimators: full training, split training
//! (whole network briefly, then the dense head alone) and frozen random
//! features.
//!
//! Each estimator runs `n_seeds` independent trainings. Run `i` uses
//! `s = derive_seed(master_seed, i)`; the network is initialised from
//! `derive_seed(s, 0)` and the two training phases shuffle with
//! `derive_seed(s, 1)` and `derive_seed(s, 2)`. All three modes therefore
//! start run `i` from the same weights. Timing and parallelism live in the
//! std crate; this module is the deterministic part.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::archspace::{ArchitectureSpec, SpaceError};
use crate::data::Dataset;
use crate::nn::{evaluate, train, NetworkState, NnError, TrainConfig};
use crate::rng::derive_seed;

/// Score assigned to a run whose loss went non-finite.
pub const DIVERGED_SCORE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Full,
    Heuristic,
    RandomWeights,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Heuristic => "heuristic",
            Mode::RandomWeights => "random_weights",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EstimateError {
    Space(SpaceError),
    Nn(NnError),
    InvalidConfig(String),
}

impl fmt::Display for EstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimateError::Space(e) => write!(f, "{e}"),
            EstimateError::Nn(e) => write!(f, "{e}"),
            EstimateError::InvalidConfig(m) => write!(f, "invalid estimator config: {m}"),
        }
    }
}

impl core::error::Error for EstimateError {}

impl From<SpaceError> for EstimateError {
    fn from(e: SpaceError) -> Self {
        EstimateError::Space(e)
    }
}

impl From<NnError> for EstimateError {
    fn from(e: NnError) -> Self {
        EstimateError::Nn(e)
    }
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullTrainConfig {
    pub epochs: usize,
    pub n_seeds: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for FullTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            n_seeds: 10,
            batch_size: default_batch(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicConfig {
    /// Whole-network epochs before the feature extractor is frozen.
    pub conv_epochs: usize,
    /// Head-only epochs after freezing.
    pub fc_epochs: usize,
    pub n_seeds: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            conv_epochs: 2,
            fc_epochs: 15,
            n_seeds: 5,
            batch_size: default_batch(),
            master_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWeightsConfig {
    pub fc_epochs: usize,
    pub n_seeds: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for RandomWeightsConfig {
    fn default() -> Self {
        Self {
            fc_epochs: 15,
            n_seeds: 5,
            batch_size: default_batch(),
            master_seed: 0,
        }
    }
}

/// The common form of all three estimators: `whole_epochs` of end-to-end
/// training followed by `head_epochs` with the feature extractor frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub mode: Mode,
    pub whole_epochs: usize,
    pub head_epochs: usize,
    pub n_seeds: usize,
    pub batch_size: usize,
    pub master_seed: u64,
}

impl Plan {
    pub fn validate(&self) -> Result<(), EstimateError> {
        if self.n_seeds == 0 {
            return Err(EstimateError::InvalidConfig("n_seeds must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(EstimateError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.mode == Mode::Full && self.head_epochs != 0 {
            return Err(EstimateError::InvalidConfig("full training has no head-only phase".into()));
        }
        if self.mode == Mode::RandomWeights && self.whole_epochs != 0 {
            return Err(EstimateError::InvalidConfig("random weights never train the extractor".into()));
        }
        Ok(())
    }

    /// Seed of run `i`.
    pub fn run_seed(&self, i: usize) -> u64 {
        derive_seed(self.master_seed, i as u64)
    }

    /// Epochs of whole-network work plus head-only work per run.
    pub fn epochs_per_run(&self) -> (usize, usize) {
        (self.whole_epochs, self.head_epochs)
    }
}

impl From<&FullTrainConfig> for Plan {
    fn from(c: &FullTrainConfig) -> Self {
        Plan {
            mode: Mode::Full,
            whole_epochs: c.epochs,
            head_epochs: 0,
            n_seeds: c.n_seeds,
            batch_size: c.batch_size,
            master_seed: c.master_seed,
        }
    }
}

impl From<&HeuristicConfig> for Plan {
    fn from(c: &HeuristicConfig) -> Self {
        Plan {
            mode: Mode::Heuristic,
            whole_epochs: c.conv_epochs,
            head_epochs: c.fc_epochs,
            n_seeds: c.n_seeds,
            batch_size: c.batch_size,
            master_seed: c.master_seed,
        }
    }
}

impl From<&RandomWeightsConfig> for Plan {
    fn from(c: &RandomWeightsConfig) -> Self {
        Plan {
            mode: Mode::RandomWeights,
            whole_epochs: 0,
            head_epochs: c.fc_epochs,
            n_seeds: c.n_seeds,
            batch_size: c.batch_size,
            master_seed: c.master_seed,
        }
    }
}

/// Outcome of one seeded training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub index: usize,
    pub seed: u64,
    /// Final validation error, or [`DIVERGED_SCORE`].
    pub val_error: f64,
    pub diverged: bool,
    /// Completed whole-network epochs.
    pub whole_epochs: usize,
    /// Completed head-only epochs.
    pub head_epochs: usize,
}

/// A run together with the networks it produced.
#[derive(Debug, Clone)]
pub struct SeedDetail {
    pub run: SeedRun,
    pub initial: NetworkState,
    pub after_whole: NetworkState,
    pub last: NetworkState,
}

/// Run `i` of `plan` on `spec`.
pub fn run_seed(spec: &ArchitectureSpec, train_set: &Dataset, val: &Dataset, plan: &Plan, i: usize) -> Result<SeedRun, EstimateError> {
    run_seed_detailed(spec, train_set, val, plan, i, false).map(|d| d.run)
}

/// As [`run_seed`], also returning the network at each phase boundary.
pub fn run_seed_detailed(
    spec: &ArchitectureSpec,
    train_set: &Dataset,
    val: &Dataset,
    plan: &Plan,
    i: usize,
    keep_networks: bool,
) -> Result<SeedDetail, EstimateError> {
    plan.validate()?;
    let seed = plan.run_seed(i);
    let mut net = spec.build(train_set.sample_shape(), train_set.num_classes())?;
    net.init(derive_seed(seed, 0));
    let initial = if keep_networks { net.clone() } else { empty_like(&net) };
    let mut cfg = TrainConfig {
        learning_rate: spec.learning_rate,
        momentum: spec.momentum,
        batch_size: plan.batch_size,
        epochs: plan.whole_epochs,
        seed: derive_seed(seed, 1),
        freeze_mask: Vec::new(),
    };
    let mut run = SeedRun {
        index: i,
        seed,
        val_error: DIVERGED_SCORE,
        diverged: false,
        whole_epochs: 0,
        head_epochs: 0,
    };
    let phase1 = train(&mut net, train_set, val, &cfg)?;
    run.whole_epochs = phase1.history.len();
    let after_whole = if keep_networks { net.clone() } else { empty_like(&net) };
    if phase1.diverged {
        run.diverged = true;
    } else {
        cfg.epochs = plan.head_epochs;
        cfg.seed = derive_seed(seed, 2);
        cfg.freeze_mask = net.feature_freeze_mask();
        let phase2 = train(&mut net, train_set, val, &cfg)?;
        run.head_epochs = phase2.history.len();
        run.diverged = phase2.diverged;
    }
    if !run.diverged {
        run.val_error = evaluate(&net, val)?;
    }
    Ok(SeedDetail {
        run,
        initial,
        after_whole,
        last: net,
    })
}

fn empty_like(net: &NetworkState) -> NetworkState {
    NetworkState::new(net.layers().to_vec(), net.input_shape()).expect("layers already validated")
}

/// Per-candidate outcome of one estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub arch_id: String,
    pub mode: Mode,
    pub seed_errors: Vec<f64>,
    pub best: f64,
    pub mean: f64,
    pub diverged_count: usize,
    pub wall_time_seconds: f64,
    pub workers: usize,
    pub runs: Vec<SeedRun>,
}

impl EvaluationResult {
    /// Aggregates runs (in any order) into a result ordered by seed index.
    pub fn aggregate(arch_id: String, mode: Mode, mut runs: Vec<SeedRun>, wall_time_seconds: f64, workers: usize) -> Self {
        runs.sort_by_key(|r| r.index);
        let seed_errors: Vec<f64> = runs.iter().map(|r| r.val_error).collect();
        let best = seed_errors.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = crate::stats::mean(&seed_errors);
        // Rounding can put the mean a hair under the minimum.
        let mean = mean.max(best);
        Self {
            arch_id,
            mode,
            best,
            mean,
            diverged_count: runs.iter().filter(|r| r.diverged).count(),
            seed_errors,
            wall_time_seconds,
            workers,
            runs,
        }
    }
}
