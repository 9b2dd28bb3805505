use archsel_core::archspace::{ArchitectureSpec, SearchSpace, SpaceError};
use archsel_core::bayesopt::{bo_loop, BoConfig, Evaluation, ObservationLog, Outcome, Status};
use archsel_core::data::DatasetMeta;
use archsel_core::estimate::{EvaluationResult, FullTrainConfig, Mode, Plan};
use archsel_core::rng::derive_seed;
use serde::{Deserialize, Serialize};

use super::{evaluate, Experiment, HarnessError};
use crate::config::ConfigError;
use crate::estimators::{measure_time, with_workers};

const BO_TAG: u64 = 0x424f_5345_4152_4348;
const OBJECTIVE_TAG: u64 = 0x4f42_4a45_4354_4956;
const CONFIRM_TAG: u64 = 0x434f_4e46_4952_4d00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub run_id: String,
    pub seed: u64,
    pub dataset: DatasetMeta,
    pub space: SearchSpace,
    /// Effective loop settings, with the seed derived from the config seed.
    pub bo: BoConfig,
    /// Objective estimator; every candidate uses the same master seed.
    pub objective: Plan,
    pub log: ObservationLog,
    /// Estimator output per observation; `None` where no candidate was
    /// trained.
    pub evaluations: Vec<Option<EvaluationResult>>,
    pub incumbent_index: usize,
    pub incumbent_spec: ArchitectureSpec,
    pub incumbent_value: f64,
    pub confirmation_config: FullTrainConfig,
    pub confirmation: EvaluationResult,
    pub workers: usize,
    pub wall_time_total: f64,
}

/// Model-based search with the configured estimator's `best` as the
/// objective, then full trainings of the incumbent.
pub fn run_architecture_search(exp: &Experiment) -> Result<SearchReport, HarnessError> {
    let cfg = &exp.config;
    let d = &exp.data;
    let space = cfg
        .space
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("search needs a [space] section".into()))?
        .build(d.train.sample_shape(), d.train.num_classes())?;
    let mut bo = cfg
        .bo
        .clone()
        .ok_or_else(|| ConfigError::Invalid("search needs a [bo] section".into()))?;
    bo.seed = derive_seed(cfg.seed, BO_TAG);
    bo.validate(space.dim()).map_err(|m| ConfigError::Invalid(format!("bo: {m}")))?;
    let objective = exp.plan(cfg.search.objective, derive_seed(cfg.seed, OBJECTIVE_TAG));

    let (out, wall) = measure_time(|| {
        with_workers(cfg.workers, || -> Result<_, HarnessError> {
            let mut results: Vec<EvaluationResult> = Vec::new();
            let log = bo_loop(
                |x: &[f64]| -> Result<Evaluation, HarnessError> {
                    let spec = match space.decode(x) {
                        Ok(s) => s,
                        Err(SpaceError::Infeasible(i)) => {
                            log::debug!("infeasible candidate: block {} {}", i.block, i.reason);
                            return Ok(Evaluation {
                                outcome: Outcome::Infeasible,
                                label: None,
                                wall_time: 0.0,
                            });
                        }
                        Err(e) => return Err(HarnessError::Runtime(format!("decode failed: {e}"))),
                    };
                    let label = Some(spec.id());
                    let (outcome, wall_time) = match evaluate(&spec, d, &objective) {
                        Ok(r) => {
                            let v = (Outcome::Value(r.best), r.wall_time_seconds);
                            results.push(r);
                            v
                        }
                        Err(HarnessError::Estimate { source, .. }) => (Outcome::Failed(source.to_string()), 0.0),
                        Err(e) => return Err(e),
                    };
                    let n = results.len();
                    log::info!("evaluation {n}: {} -> {:?}", label.as_deref().unwrap_or(""), outcome);
                    Ok(Evaluation {
                        outcome,
                        label,
                        wall_time,
                    })
                },
                space.dim(),
                &bo,
            )?;
            Ok((log, results))
        })
    });
    let (log, results) = out?;

    let mut trained = results.into_iter();
    let evaluations: Vec<Option<EvaluationResult>> = log
        .observations
        .iter()
        .map(|o| match o.status {
            Status::Ok => trained.next(),
            Status::Infeasible | Status::Failed => None,
        })
        .collect();
    let incumbent_index = log
        .incumbent
        .filter(|&i| log.observations[i].status == Status::Ok)
        .ok_or_else(|| HarnessError::Runtime("no candidate could be trained".into()))?;
    let incumbent = &log.observations[incumbent_index];
    let incumbent_spec = space
        .decode(&incumbent.x)
        .map_err(|e| HarnessError::Runtime(format!("incumbent does not decode: {e}")))?;
    let incumbent_value = incumbent.value;

    let confirmation_config = FullTrainConfig {
        epochs: cfg.full.epochs,
        n_seeds: cfg.search.confirm_seeds,
        batch_size: cfg.full.batch_size,
        master_seed: derive_seed(cfg.seed, CONFIRM_TAG),
    };
    let plan = Plan::from(&confirmation_config);
    debug_assert_eq!(plan.mode, Mode::Full);
    let (confirmation, confirm_wall) = measure_time(|| with_workers(cfg.workers, || evaluate(&incumbent_spec, d, &plan)));
    let confirmation = confirmation?;

    Ok(SearchReport {
        run_id: exp.run_id.clone(),
        seed: cfg.seed,
        dataset: d.meta.clone(),
        space,
        bo,
        objective,
        log,
        evaluations,
        incumbent_index,
        incumbent_spec,
        incumbent_value,
        confirmation_config,
        confirmation,
        workers: cfg.workers,
        wall_time_total: wall + confirm_wall,
    })
}
