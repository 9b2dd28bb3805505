//! Experiment runners. Every random choice derives from the config seed:
//! architecture `i` of a suite uses master seed `derive_seed(seed, i)` for
//! all of its estimators, so run `j` of each mode starts from the same
//! weights.

mod correlation;
mod search;
mod timing;

pub use correlation::{run_correlation_experiment, CorrelationReport, CorrelationRow};
pub use search::{run_architecture_search, SearchReport};
pub use timing::{run_timing_comparison, TimingReport, TimingRow};

use archsel_core::archspace::ArchitectureSpec;
use archsel_core::data::DatasetMeta;
use archsel_core::estimate::{EstimateError, EvaluationResult, Mode, Plan};
use archsel_core::rng::derive_seed;
use archsel_core::stats::StatsError;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, LoadedConfig, PreparedData};
use crate::datasets::LoadError;
use crate::estimators::{measure_time, with_workers};
use crate::report::Report;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] LoadError),
    #[error("{arch_id}: {source}")]
    Estimate { arch_id: String, source: EstimateError },
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(ConfigError::MissingData(_)) | HarnessError::Data(_) => 3,
            HarnessError::Config(_) => 2,
            HarnessError::Estimate { .. } | HarnessError::Runtime(_) | HarnessError::Io(_) => 4,
        }
    }
}

impl From<String> for HarnessError {
    fn from(m: String) -> Self {
        HarnessError::Runtime(m)
    }
}

/// A config together with its prepared data.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub run_id: String,
    pub data: PreparedData,
}

impl Experiment {
    pub fn prepare(loaded: LoadedConfig) -> Result<Self, HarnessError> {
        let data = loaded.config.dataset.prepare()?;
        for w in &data.warnings {
            log::warn!("{}: {w}", loaded.config.dataset.name);
        }
        Ok(Self {
            config: loaded.config,
            run_id: loaded.run_id,
            data,
        })
    }

    /// Master seed shared by every estimator of suite entry `i`.
    pub fn arch_seed(&self, i: usize) -> u64 {
        derive_seed(self.config.seed, i as u64)
    }

    pub fn plan(&self, mode: Mode, master_seed: u64) -> Plan {
        let c = &self.config;
        let mut plan = match mode {
            Mode::Full => Plan::from(&c.full),
            Mode::Heuristic => Plan::from(&c.heuristic),
            Mode::RandomWeights => Plan::from(&c.random_weights),
        };
        plan.master_seed = master_seed;
        plan
    }

    /// Checks every suite entry against the data before any training.
    pub fn check_architectures(&self) -> Result<(), HarnessError> {
        let shape = self.data.train.sample_shape();
        let k = self.data.train.num_classes();
        for (i, a) in self.config.architectures.iter().enumerate() {
            a.validate(shape, k).map_err(|e| {
                ConfigError::Invalid(format!("architecture {i} ({}) does not fit the data: {e}", a.id()))
            })?;
        }
        Ok(())
    }

    pub fn run(&self) -> Result<Report, HarnessError> {
        Ok(match self.config.kind {
            ExperimentKind::Correlation => Report::Correlation(run_correlation_experiment(self)?),
            ExperimentKind::Timing => Report::Timing(run_timing_comparison(self)?),
            ExperimentKind::Search => Report::Search(run_architecture_search(self)?),
        })
    }

    /// One architecture, one mode, using the suite seed of entry `index`.
    pub fn estimate_one(&self, index: usize, mode: Mode) -> Result<EstimateReport, HarnessError> {
        let spec = self
            .config
            .architectures
            .get(index)
            .ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "architecture index {index} out of range ({} listed)",
                    self.config.architectures.len()
                ))
            })?
            .clone();
        let d = &self.data;
        let param_count = spec
            .param_count(d.train.sample_shape(), d.train.num_classes())
            .map_err(|e| ConfigError::Invalid(format!("architecture {index}: {e}")))?;
        let plan = self.plan(mode, self.arch_seed(index));
        let result = with_workers(self.config.workers, || evaluate(&spec, d, &plan))?;
        Ok(EstimateReport {
            run_id: format!("{}-a{index}-{}", self.run_id, mode.name()),
            seed: self.config.seed,
            dataset: d.meta.clone(),
            arch_index: index,
            spec,
            param_count,
            plan,
            result,
        })
    }
}

/// Runs `plan` on `spec` within the current worker pool.
pub(crate) fn evaluate(spec: &ArchitectureSpec, d: &PreparedData, plan: &Plan) -> Result<EvaluationResult, HarnessError> {
    let id = spec.id();
    let (r, _) = measure_time(|| crate::estimators::run_plan(spec, &id, &d.train, &d.val, plan));
    let r = r.map_err(|source| HarnessError::Estimate {
        arch_id: id.clone(),
        source,
    })?;
    log::info!(
        "{id}: {} best {:.4} mean {:.4} in {:.1}s",
        plan.mode,
        r.best,
        r.mean,
        r.wall_time_seconds
    );
    Ok(r)
}

/// Pearson correlation, or `None` with the reason when undefined.
pub(crate) fn correlation(xs: &[f64], ys: &[f64]) -> (Option<f64>, Option<String>) {
    match archsel_core::stats::pearson(xs, ys) {
        Ok(r) => (Some(r), None),
        Err(e @ (StatsError::DegenerateInput | StatsError::TooShort { .. })) => (None, Some(e.to_string())),
    }
}

/// Result of the `estimate` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub run_id: String,
    pub seed: u64,
    pub dataset: DatasetMeta,
    pub arch_index: usize,
    pub spec: ArchitectureSpec,
    pub param_count: usize,
    pub plan: Plan,
    pub result: EvaluationResult,
}
