//! Timed estimators. Seeds of one estimate run on a pool of `workers`
//! threads; the recorded wall time is the elapsed time of the whole
//! estimate.

use std::time::Instant;

use archsel_core::archspace::ArchitectureSpec;
use archsel_core::data::Dataset;
use archsel_core::estimate::{
    run_seed, EstimateError, EvaluationResult, FullTrainConfig, HeuristicConfig, Plan, RandomWeightsConfig, SeedRun,
};
use rayon::prelude::*;

/// Runs `f` and returns its result with the elapsed monotonic time in
/// seconds.
pub fn measure_time<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

/// Runs `f` inside a dedicated pool of `workers` threads (at least one).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("could not start {workers} worker threads ({e}); running inline");
            f()
        }
    }
}

/// All seeded runs of `plan` on the current rayon pool.
pub fn run_plan(
    spec: &ArchitectureSpec,
    arch_id: &str,
    train: &Dataset,
    val: &Dataset,
    plan: &Plan,
) -> Result<EvaluationResult, EstimateError> {
    plan.validate()?;
    spec.validate(train.sample_shape(), train.num_classes())?;
    let (runs, wall) = measure_time(|| {
        (0..plan.n_seeds)
            .into_par_iter()
            .map(|i| run_seed(spec, train, val, plan, i))
            .collect::<Result<Vec<SeedRun>, _>>()
    });
    let runs = runs?;
    for r in runs.iter().filter(|r| r.diverged) {
        log::warn!("{arch_id}: {} run {} diverged, scored {}", plan.mode, r.index, r.val_error);
    }
    Ok(EvaluationResult::aggregate(
        arch_id.to_string(),
        plan.mode,
        runs,
        wall.max(f64::MIN_POSITIVE),
        rayon::current_num_threads(),
    ))
}

/// [`run_plan`] on a pool of `workers` threads.
pub fn estimate(
    spec: &ArchitectureSpec,
    arch_id: &str,
    train: &Dataset,
    val: &Dataset,
    plan: &Plan,
    workers: usize,
) -> Result<EvaluationResult, EstimateError> {
    with_workers(workers, || run_plan(spec, arch_id, train, val, plan))
}

pub fn estimate_full(
    spec: &ArchitectureSpec,
    train: &Dataset,
    val: &Dataset,
    cfg: &FullTrainConfig,
    workers: usize,
) -> Result<EvaluationResult, EstimateError> {
    estimate(spec, &spec.id(), train, val, &Plan::from(cfg), workers)
}

/// Two-phase estimate; the headline score is `best`.
pub fn estimate_heuristic(
    spec: &ArchitectureSpec,
    train: &Dataset,
    val: &Dataset,
    cfg: &HeuristicConfig,
    workers: usize,
) -> Result<EvaluationResult, EstimateError> {
    estimate(spec, &spec.id(), train, val, &Plan::from(cfg), workers)
}

/// Head-only training on top of the frozen random feature extractor.
pub fn estimate_random_weights(
    spec: &ArchitectureSpec,
    train: &Dataset,
    val: &Dataset,
    cfg: &RandomWeightsConfig,
    workers: usize,
) -> Result<EvaluationResult, EstimateError> {
    estimate(spec, &spec.id(), train, val, &Plan::from(cfg), workers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use archsel_core::archspace::{ConvBlock, Nonlinearity};
    use archsel_core::data::{split, synthesize};
    use archsel_core::estimate::Mode;
    use std::thread::sleep;
    use std::time::Duration;

    fn spec() -> ArchitectureSpec {
        ArchitectureSpec {
            conv_blocks: vec![ConvBlock {
                out_channels: 4,
                kernel_size: 3,
                pool: true,
            }],
            nonlinearity: Nonlinearity::Relu,
            fc_layers: vec![16],
            learning_rate: 0.05,
            momentum: 0.9,
        }
    }

    fn data() -> (Dataset, Dataset) {
        split(&synthesize(3, 30, 1, 8, 8, 0.3, 2).unwrap(), 0.3, 1).unwrap()
    }

    #[test]
    fn nested_timing_is_additive() {
        let (total, outer) = measure_time(|| {
            let ((), a) = measure_time(|| sleep(Duration::from_millis(60)));
            let ((), b) = measure_time(|| sleep(Duration::from_millis(90)));
            a + b
        });
        assert!(total >= 0.15);
        assert!((outer - total).abs() <= 0.05 * outer, "outer {outer}, parts {total}");
    }

    #[test]
    fn results_are_timed_and_ordered() {
        let (tr, va) = data();
        let cfg = HeuristicConfig {
            conv_epochs: 1,
            fc_epochs: 1,
            n_seeds: 3,
            batch_size: 16,
            master_seed: 4,
        };
        let r = estimate_heuristic(&spec(), &tr, &va, &cfg, 1).unwrap();
        assert_eq!(r.mode, Mode::Heuristic);
        assert_eq!(r.seed_errors.len(), 3);
        assert!(r.wall_time_seconds > 0.0);
        assert!(r.best <= r.mean);
        assert_eq!(r.arch_id, spec().id());
        assert!(r.runs.iter().all(|s| s.whole_epochs == 1 && s.head_epochs == 1));
    }

    #[test]
    fn workers_do_not_change_scores() {
        let (tr, va) = data();
        let cfg = FullTrainConfig {
            epochs: 2,
            n_seeds: 3,
            batch_size: 16,
            master_seed: 9,
        };
        let a = estimate_full(&spec(), &tr, &va, &cfg, 1).unwrap();
        let b = estimate_full(&spec(), &tr, &va, &cfg, 3).unwrap();
        assert_eq!(a.seed_errors, b.seed_errors);
        assert_eq!(b.workers, 3);
    }

    #[test]
    fn random_weights_zero_epochs_is_untrained() {
        let (tr, va) = data();
        let cfg = RandomWeightsConfig {
            fc_epochs: 0,
            n_seeds: 2,
            batch_size: 16,
            master_seed: 1,
        };
        let r = estimate_random_weights(&spec(), &tr, &va, &cfg, 1).unwrap();
        assert!(r.runs.iter().all(|s| s.whole_epochs == 0 && s.head_epochs == 0));
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let (tr, va) = data();
        let mut s = spec();
        s.conv_blocks[0].kernel_size = 11;
        assert!(estimate_full(&s, &tr, &va, &FullTrainConfig::default(), 1).is_err());
    }
}
