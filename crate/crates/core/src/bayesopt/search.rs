use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::acquisition::{propose_next, ProposalConfig};
use super::gp::{gp_fit, GpFitOptions, KernelKind};
use super::lhs::lhs_sample;
use crate::rng::{derive_seed, SeedRng};

const STREAM_LHS: u64 = 1;
const STREAM_RESAMPLE: u64 = 2;
const STREAM_FIT: u64 = 3;
const STREAM_PROPOSE: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoConfig {
    pub n_init: usize,
    pub n_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default = "default_fit_starts")]
    pub fit_starts: usize,
    #[serde(default = "default_fit_evals")]
    pub fit_max_evals: usize,
    #[serde(default)]
    pub proposal: ProposalConfig,
    #[serde(default = "default_resamples")]
    pub max_resamples: usize,
    /// Score recorded for points that stay infeasible or fail.
    #[serde(default = "default_failure_score")]
    pub failure_score: f64,
}

fn default_fit_starts() -> usize {
    8
}

fn default_fit_evals() -> usize {
    400
}

fn default_resamples() -> usize {
    16
}

fn default_failure_score() -> f64 {
    1.0
}

impl BoConfig {
    pub fn new(n_init: usize, n_iter: usize, seed: u64) -> Self {
        Self {
            n_init,
            n_iter,
            seed,
            kernel: KernelKind::default(),
            fit_starts: default_fit_starts(),
            fit_max_evals: default_fit_evals(),
            proposal: ProposalConfig::default(),
            max_resamples: default_resamples(),
            failure_score: default_failure_score(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<(), String> {
        if dim == 0 {
            return Err("search space has no dimensions".into());
        }
        if self.n_init < dim + 1 {
            return Err(format!("n_init = {} must be at least d + 1 = {}", self.n_init, dim + 1));
        }
        if self.fit_starts < 8 {
            return Err("fit_starts must be at least 8".into());
        }
        if self.proposal.candidates == 0 {
            return Err("proposal needs at least one candidate".into());
        }
        if !self.failure_score.is_finite() {
            return Err("failure_score must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Infill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Value(f64),
    /// The point does not decode to a feasible candidate.
    Infeasible,
    /// The candidate could not be scored; recorded with the failure score.
    Failed(String),
}

/// What the objective reports for one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub outcome: Outcome,
    /// Identifier of the decoded candidate, if any.
    pub label: Option<String>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Infeasible,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub phase: Phase,
    pub x: Vec<f64>,
    pub label: Option<String>,
    pub value: f64,
    pub best_so_far: f64,
    pub wall_time: f64,
    pub status: Status,
    /// Uniform redraws needed before a feasible point was found.
    pub resamples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ObservationLog {
    pub observations: Vec<Observation>,
    /// Index of the first observation attaining the minimum.
    pub incumbent: Option<usize>,
}

impl ObservationLog {
    pub fn push(&mut self, mut obs: Observation) {
        let prev = self.incumbent_value();
        if prev.is_none_or(|b| obs.value < b) {
            self.incumbent = Some(self.observations.len());
        }
        obs.best_so_far = prev.map_or(obs.value, |b| b.min(obs.value));
        self.observations.push(obs);
    }

    pub fn incumbent_value(&self) -> Option<f64> {
        self.incumbent.map(|i| self.observations[i].value)
    }

    pub fn incumbent(&self) -> Option<&Observation> {
        self.incumbent.map(|i| &self.observations[i])
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Evaluates `x`, redrawing uniformly while the objective says infeasible.
fn evaluate_point<E, F>(objective: &mut F, x: Vec<f64>, phase: Phase, cfg: &BoConfig, stream: u64) -> Result<Observation, E>
where
    F: FnMut(&[f64]) -> Result<Evaluation, E>,
{
    let mut rng = SeedRng::new(stream);
    let mut x = x;
    let mut wall = 0.0;
    let mut resamples = 0;
    loop {
        let ev = objective(&x)?;
        wall += ev.wall_time;
        let (value, status, message) = match ev.outcome {
            Outcome::Value(v) if v.is_finite() => (v, Status::Ok, None),
            Outcome::Value(v) => (cfg.failure_score, Status::Failed, Some(format!("objective returned {v}"))),
            Outcome::Failed(m) => (cfg.failure_score, Status::Failed, Some(m)),
            Outcome::Infeasible if resamples < cfg.max_resamples => {
                resamples += 1;
                x = (0..x.len()).map(|_| rng.uniform()).collect();
                continue;
            }
            Outcome::Infeasible => (cfg.failure_score, Status::Infeasible, None),
        };
        return Ok(Observation {
            phase,
            x,
            label: ev.label,
            value,
            best_so_far: value,
            wall_time: wall,
            status,
            resamples,
            message,
        });
    }
}

/// Latin hypercube start, then `n_iter` rounds of fit → maximize expected
/// improvement → evaluate. Lower objective values are better. Errors from
/// the objective abort the loop; per-point failures are scored and logged.
pub fn bo_loop<E, F>(mut objective: F, dim: usize, cfg: &BoConfig) -> Result<ObservationLog, E>
where
    F: FnMut(&[f64]) -> Result<Evaluation, E>,
    E: From<String>,
{
    cfg.validate(dim).map_err(E::from)?;
    let mut log = ObservationLog::default();
    let design = lhs_sample(cfg.n_init, dim, derive_seed(cfg.seed, STREAM_LHS));
    let resample_seed = derive_seed(cfg.seed, STREAM_RESAMPLE);
    for (i, x) in design.points.into_iter().enumerate() {
        let obs = evaluate_point(&mut objective, x, Phase::Init, cfg, derive_seed(resample_seed, i as u64))?;
        log.push(obs);
    }
    for t in 0..cfg.n_iter {
        let step = (cfg.n_init + t) as u64;
        let xs: Vec<Vec<f64>> = log.observations.iter().map(|o| o.x.clone()).collect();
        let ys: Vec<f64> = log.observations.iter().map(|o| o.value).collect();
        let f_min = log.incumbent_value().expect("non-empty log");
        let opts = GpFitOptions {
            kernel: cfg.kernel,
            n_starts: cfg.fit_starts,
            seed: derive_seed(derive_seed(cfg.seed, STREAM_FIT), step),
            max_evals: cfg.fit_max_evals,
        };
        let propose_seed = derive_seed(derive_seed(cfg.seed, STREAM_PROPOSE), step);
        let x = match gp_fit(&xs, &ys, &opts) {
            Ok(model) => propose_next(&model, f_min, propose_seed, &cfg.proposal),
            Err(_) => {
                let mut rng = SeedRng::new(propose_seed);
                (0..dim).map(|_| rng.uniform()).collect()
            }
        };
        let obs = evaluate_point(&mut objective, x, Phase::Infill, cfg, derive_seed(resample_seed, step))?;
        log.push(obs);
    }
    Ok(log)
}
