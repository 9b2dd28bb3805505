use archsel_core::archspace::ArchitectureSpec;
use archsel_core::data::DatasetMeta;
use archsel_core::estimate::{EvaluationResult, FullTrainConfig, HeuristicConfig, Mode, RandomWeightsConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{correlation, evaluate, Experiment, HarnessError};
use crate::estimators::{measure_time, with_workers};

/// Errors within this distance of chance count as noise.
pub const HIGH_NOISE_BAND: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub arch_id: String,
    pub spec: ArchitectureSpec,
    pub param_count: usize,
    pub full: EvaluationResult,
    pub heuristic: EvaluationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_weights: Option<EvaluationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub run_id: String,
    pub seed: u64,
    pub dataset: DatasetMeta,
    pub full_config: FullTrainConfig,
    pub heuristic_config: HeuristicConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_weights_config: Option<RandomWeightsConfig>,
    /// The heuristic column holds a copy of the full-training results.
    pub self_correlation: bool,
    pub n_architectures: usize,
    pub rows: Vec<CorrelationRow>,
    /// Pearson r of full-training means against heuristic bests.
    pub corr_mean_best: Option<f64>,
    /// Pearson r of full-training bests against heuristic bests.
    pub corr_best_best: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rw_corr_mean_best: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rw_corr_best_best: Option<f64>,
    /// Why a correlation is missing, if one is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
    /// Error of uninformed guessing, `1 - 1/K`.
    pub chance_error: f64,
    /// Every recorded error lies within [`HIGH_NOISE_BAND`] of chance.
    pub high_noise: bool,
    pub workers: usize,
    pub wall_time_total: f64,
}

impl CorrelationReport {
    pub fn full_means(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.full.mean).collect()
    }

    pub fn full_bests(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.full.best).collect()
    }

    pub fn heuristic_bests(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.heuristic.best).collect()
    }
}

/// Full training and the heuristic for every suite entry; architectures
/// run in parallel over the worker pool.
pub fn run_correlation_experiment(exp: &Experiment) -> Result<CorrelationReport, HarnessError> {
    exp.check_architectures()?;
    let cfg = &exp.config;
    if cfg.architectures.len() < 3 {
        return Err(HarnessError::Runtime(format!(
            "need at least 3 architectures, got {}",
            cfg.architectures.len()
        )));
    }
    let d = &exp.data;
    let with_rw = cfg.correlation.include_random_weights;
    let (rows, wall) = measure_time(|| {
        with_workers(cfg.workers, || {
            cfg.architectures
                .par_iter()
                .enumerate()
                .map(|(i, spec)| {
                    let seed = exp.arch_seed(i);
                    let full = evaluate(spec, d, &exp.plan(Mode::Full, seed))?;
                    let heuristic = if cfg.hooks.self_correlation {
                        full.clone()
                    } else {
                        evaluate(spec, d, &exp.plan(Mode::Heuristic, seed))?
                    };
                    let random_weights = if with_rw {
                        Some(evaluate(spec, d, &exp.plan(Mode::RandomWeights, seed))?)
                    } else {
                        None
                    };
                    Ok(CorrelationRow {
                        arch_id: spec.id(),
                        spec: spec.clone(),
                        param_count: spec.param_count(d.train.sample_shape(), d.train.num_classes()).unwrap_or(0),
                        full,
                        heuristic,
                        random_weights,
                    })
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
    });
    let rows = rows?;
    let full_means: Vec<f64> = rows.iter().map(|r| r.full.mean).collect();
    let full_bests: Vec<f64> = rows.iter().map(|r| r.full.best).collect();
    let heur_bests: Vec<f64> = rows.iter().map(|r| r.heuristic.best).collect();
    let (corr_mean_best, why_a) = correlation(&full_means, &heur_bests);
    let (corr_best_best, why_b) = correlation(&full_bests, &heur_bests);
    let (mut rw_corr_mean_best, mut rw_corr_best_best) = (None, None);
    if with_rw {
        let rw: Vec<f64> = rows.iter().filter_map(|r| r.random_weights.as_ref().map(|e| e.best)).collect();
        rw_corr_mean_best = correlation(&full_means, &rw).0;
        rw_corr_best_best = correlation(&full_bests, &rw).0;
    }
    let k = d.meta.classes as f64;
    let chance_error = 1.0 - 1.0 / k;
    let high_noise = rows
        .iter()
        .flat_map(|r| {
            r.full
                .seed_errors
                .iter()
                .chain(&r.heuristic.seed_errors)
                .chain(r.random_weights.iter().flat_map(|e| &e.seed_errors))
        })
        .all(|e| (e - chance_error).abs() <= HIGH_NOISE_BAND);
    let undefined_reason = why_a.or(why_b);
    if let Some(why) = &undefined_reason {
        log::warn!("correlation undefined: {why}");
    }
    if high_noise {
        log::warn!("all errors are within {HIGH_NOISE_BAND} of chance ({chance_error:.3}); correlations are noise");
    }
    Ok(CorrelationReport {
        run_id: exp.run_id.clone(),
        seed: cfg.seed,
        dataset: d.meta.clone(),
        full_config: cfg.full.clone(),
        heuristic_config: cfg.heuristic.clone(),
        random_weights_config: with_rw.then(|| cfg.random_weights.clone()),
        self_correlation: cfg.hooks.self_correlation,
        n_architectures: rows.len(),
        rows,
        corr_mean_best,
        corr_best_best,
        rw_corr_mean_best,
        rw_corr_best_best,
        undefined_reason,
        chance_error,
        high_noise,
        workers: cfg.workers,
        wall_time_total: wall,
    })
}
