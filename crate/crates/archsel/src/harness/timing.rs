use archsel_core::archspace::ArchitectureSpec;
use archsel_core::data::DatasetMeta;
use archsel_core::estimate::{EvaluationResult, FullTrainConfig, HeuristicConfig, Mode, RandomWeightsConfig};
use archsel_core::stats::mean;
use serde::{Deserialize, Serialize};

use super::{evaluate, Experiment, HarnessError};
use crate::estimators::{measure_time, with_workers};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub arch_id: String,
    pub spec: ArchitectureSpec,
    pub param_count: usize,
    pub full: EvaluationResult,
    pub heuristic: EvaluationResult,
    pub random_weights: EvaluationResult,
    /// Heuristic wall time over full-training wall time.
    pub heuristic_ratio: f64,
    pub random_weights_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub run_id: String,
    pub seed: u64,
    pub dataset: DatasetMeta,
    pub full_config: FullTrainConfig,
    pub heuristic_config: HeuristicConfig,
    pub random_weights_config: RandomWeightsConfig,
    pub workers: usize,
    pub rows: Vec<TimingRow>,
    /// Mean heuristic time over mean full-training time.
    pub ratio_heuristic: f64,
    pub ratio_random_weights: f64,
    /// Mean of the per-architecture ratios.
    pub mean_ratio_heuristic: f64,
    pub mean_ratio_random_weights: f64,
    pub wall_time_total: f64,
}

/// Times all three estimators on every suite entry. Architectures run one
/// after another so that each measurement has the whole pool.
pub fn run_timing_comparison(exp: &Experiment) -> Result<TimingReport, HarnessError> {
    exp.check_architectures()?;
    let cfg = &exp.config;
    if cfg.architectures.is_empty() {
        return Err(HarnessError::Runtime("no architectures to time".into()));
    }
    let d = &exp.data;
    let (rows, wall) = measure_time(|| -> Result<Vec<TimingRow>, HarnessError> {
        let mut rows = Vec::with_capacity(cfg.architectures.len());
        for (i, spec) in cfg.architectures.iter().enumerate() {
            let seed = exp.arch_seed(i);
            let run = |mode| with_workers(cfg.workers, || evaluate(spec, d, &exp.plan(mode, seed)));
            let full = run(Mode::Full)?;
            let heuristic = run(Mode::Heuristic)?;
            let random_weights = run(Mode::RandomWeights)?;
            rows.push(TimingRow {
                arch_id: spec.id(),
                spec: spec.clone(),
                param_count: spec.param_count(d.train.sample_shape(), d.train.num_classes()).unwrap_or(0),
                heuristic_ratio: heuristic.wall_time_seconds / full.wall_time_seconds,
                random_weights_ratio: random_weights.wall_time_seconds / full.wall_time_seconds,
                full,
                heuristic,
                random_weights,
            });
        }
        Ok(rows)
    });
    let rows = rows?;
    let times = |f: fn(&TimingRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let full_mean = mean(&times(|r| r.full.wall_time_seconds));
    Ok(TimingReport {
        run_id: exp.run_id.clone(),
        seed: cfg.seed,
        dataset: d.meta.clone(),
        full_config: cfg.full.clone(),
        heuristic_config: cfg.heuristic.clone(),
        random_weights_config: cfg.random_weights.clone(),
        workers: cfg.workers,
        ratio_heuristic: mean(&times(|r| r.heuristic.wall_time_seconds)) / full_mean,
        ratio_random_weights: mean(&times(|r| r.random_weights.wall_time_seconds)) / full_mean,
        mean_ratio_heuristic: mean(&times(|r| r.heuristic_ratio)),
        mean_ratio_random_weights: mean(&times(|r| r.random_weights_ratio)),
        rows,
        wall_time_total: wall,
    })
}
