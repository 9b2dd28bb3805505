//! TOML experiment configuration. Relative paths are resolved against the
//! directory of the file they appear in.

use std::fs;
use std::path::{Path, PathBuf};

use archsel_core::archspace::{ArchitectureSpec, ParamDef, PoolRule, SearchSpace};
use archsel_core::bayesopt::BoConfig;
use archsel_core::data::{normalize, split, synthesize, Dataset, DatasetMeta, NormalizeWarning, SplitTag};
use archsel_core::estimate::{FullTrainConfig, HeuristicConfig, Mode, RandomWeightsConfig};
use archsel_core::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{self, LoadError, LoadWarning};

const LABEL_SHUFFLE_TAG: u64 = 0x5348_5546;
const SPLIT_TAG: u64 = 0x5350_4c54;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
    /// A dataset file or directory named by the config does not exist.
    #[error("dataset path {} does not exist", .0.display())]
    MissingData(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Correlation,
    Timing,
    Search,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Correlation => "correlation",
            ExperimentKind::Timing => "timing",
            ExperimentKind::Search => "search",
        }
    }
}

/// Where samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Directory with `{train,val}-{images-idx3,labels-idx1}-ubyte`.
    IdxDir {
        path: PathBuf,
        /// Check the shipped subset digests before loading.
        #[serde(default)]
        verify_checksums: bool,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        val_images: PathBuf,
        val_labels: PathBuf,
    },
    /// USPS text files; without `val` the training file is split.
    Usps {
        train: PathBuf,
        #[serde(default)]
        val: Option<PathBuf>,
    },
    /// Fixture containers; without `val` the training file is split.
    Fixture {
        train: PathBuf,
        #[serde(default)]
        val: Option<PathBuf>,
    },
    Synthetic {
        classes: usize,
        per_class: usize,
        #[serde(default = "one")]
        channels: usize,
        height: usize,
        width: usize,
        noise_sigma: f64,
        #[serde(default)]
        data_seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(flatten)]
    pub source: DatasetSource,
    /// Per-channel standardization with training-split statistics.
    #[serde(default = "yes")]
    pub normalize: bool,
    /// Validation share when the source has no separate validation set.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    /// Permute labels of both splits, destroying any learnable signal.
    #[serde(default)]
    pub shuffle_labels: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_limit: Option<usize>,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

fn default_val_fraction() -> f64 {
    0.1
}

fn five() -> usize {
    5
}

fn heuristic_mode() -> Mode {
    Mode::Heuristic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    /// `"default"` for the built-in space; otherwise `params` is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: Vec<ParamDef>,
    #[serde(default)]
    pub pool_rule: PoolRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Estimator used as the objective; its `best` is minimized.
    #[serde(default = "heuristic_mode")]
    pub objective: Mode,
    /// Full trainings of the incumbent after the search.
    #[serde(default = "five")]
    pub confirm_seeds: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        Self {
            objective: heuristic_mode(),
            confirm_seeds: five(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSection {
    /// Also score every architecture with the random-weights estimator.
    #[serde(default)]
    pub include_random_weights: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Hooks {
    /// Correlation experiments score the heuristic column with the full
    /// estimator instead.
    #[serde(default)]
    pub self_correlation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub dataset: DatasetConfig,
    /// File holding further `[[architectures]]` entries, listed first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<PathBuf>,
    #[serde(default)]
    pub architectures: Vec<ArchitectureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceConfig>,
    #[serde(default)]
    pub full: FullTrainConfig,
    #[serde(default)]
    pub heuristic: HeuristicConfig,
    #[serde(default)]
    pub random_weights: RandomWeightsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bo: Option<BoConfig>,
    #[serde(default)]
    pub correlation: CorrelationSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub hooks: Hooks,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    architectures: Vec<ArchitectureSpec>,
}

/// Command-line replacements for config fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub dataset: Option<String>,
}

/// A parsed config with paths made absolute and the suite file inlined.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    /// Identifier derived from everything except `out` and `workers`,
    /// with dataset paths as written.
    pub run_id: String,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    toml::from_str(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

impl DatasetSource {
    fn paths_mut(&mut self) -> Vec<&mut PathBuf> {
        match self {
            DatasetSource::IdxDir { path, .. } => vec![path],
            DatasetSource::Idx {
                train_images,
                train_labels,
                val_images,
                val_labels,
            } => vec![train_images, train_labels, val_images, val_labels],
            DatasetSource::Usps { train, val } | DatasetSource::Fixture { train, val } => {
                let mut v = vec![train];
                v.extend(val.as_mut());
                v
            }
            DatasetSource::Synthetic { .. } => vec![],
        }
    }
}

impl DatasetConfig {
    /// Interprets a `--dataset` value: `synthetic`, an IDX directory, a
    /// fixture container or a USPS text file.
    pub fn from_cli(value: &str) -> Result<Self, ConfigError> {
        let path = PathBuf::from(value);
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| value.to_string());
        let source = if value == "synthetic" {
            DatasetSource::Synthetic {
                classes: 4,
                per_class: 100,
                channels: 1,
                height: 16,
                width: 16,
                noise_sigma: 0.3,
                data_seed: 0,
            }
        } else if path.is_dir() {
            DatasetSource::IdxDir {
                path,
                verify_checksums: false,
            }
        } else if path.is_file() {
            let head = fs::read(&path)
                .map(|b| b.into_iter().take(8).collect::<Vec<u8>>())
                .map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
            if head == datasets::FIXTURE_MAGIC {
                DatasetSource::Fixture { train: path, val: None }
            } else {
                DatasetSource::Usps { train: path, val: None }
            }
        } else {
            return Err(ConfigError::MissingData(path));
        };
        Ok(Self {
            name,
            source,
            normalize: true,
            val_fraction: default_val_fraction(),
            shuffle_labels: false,
            train_limit: None,
            val_limit: None,
        })
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source,
        })
    }

    /// Reads `path`, applies `overrides`, resolves relative paths and
    /// checks that every referenced file exists.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<LoadedConfig, ConfigError> {
        let cfg: ExperimentConfig = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.finish(base, overrides)
    }

    /// As [`ExperimentConfig::load`] for an already parsed config whose
    /// relative paths refer to `base`.
    pub fn finish(mut self, base: &Path, overrides: &Overrides) -> Result<LoadedConfig, ConfigError> {
        let cwd = Path::new(".");
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
        if let Some(w) = overrides.workers {
            self.workers = w;
        }
        let mut out_from_cli = false;
        if let Some(o) = &overrides.out {
            self.out = Some(o.clone());
            out_from_cli = true;
        }
        let mut dataset_from_cli = false;
        if let Some(d) = &overrides.dataset {
            let mut ds = DatasetConfig::from_cli(d)?;
            ds.normalize = self.dataset.normalize;
            ds.shuffle_labels = self.dataset.shuffle_labels;
            ds.val_fraction = self.dataset.val_fraction;
            self.dataset = ds;
            dataset_from_cli = true;
        }
        if let Some(suite) = self.suite.take() {
            let suite_path = resolve(base, &suite);
            let file: SuiteFile = read_toml(&suite_path)?;
            let mut all = file.architectures;
            all.append(&mut self.architectures);
            self.architectures = all;
        }
        self.validate()?;
        let run_id = self.run_id();
        let data_base = if dataset_from_cli { cwd } else { base };
        for p in self.dataset.source.paths_mut() {
            *p = resolve(data_base, p);
            if !p.exists() {
                return Err(ConfigError::MissingData(p.clone()));
            }
        }
        if let Some(o) = &mut self.out {
            *o = resolve(if out_from_cli { cwd } else { base }, o);
        }
        Ok(LoadedConfig { config: self, run_id })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        match self.kind {
            ExperimentKind::Correlation if self.architectures.len() < 3 => {
                return bad(format!(
                    "a correlation experiment needs at least 3 architectures, got {}",
                    self.architectures.len()
                ));
            }
            ExperimentKind::Timing if self.architectures.is_empty() => {
                return bad("a timing experiment needs at least one architecture".into());
            }
            ExperimentKind::Search => {
                if self.space.is_none() {
                    return bad("a search experiment needs a [space] section".into());
                }
                if self.bo.is_none() {
                    return bad("a search experiment needs a [bo] section".into());
                }
                if self.search.confirm_seeds == 0 {
                    return bad("search.confirm_seeds must be >= 1".into());
                }
            }
            _ => {}
        }
        if let Some(s) = &self.space {
            match s.preset.as_deref() {
                Some("default") if s.params.is_empty() => {}
                Some("default") => return bad("space: give either preset or params, not both".into()),
                Some(p) => return bad(format!("space: unknown preset {p:?}")),
                None if s.params.is_empty() => return bad("space: no params".into()),
                None => {}
            }
        }
        let d = &self.dataset;
        if !(d.val_fraction > 0.0 && d.val_fraction < 1.0) {
            return bad(format!("dataset.val_fraction must be in (0, 1), got {}", d.val_fraction));
        }
        if let DatasetSource::Synthetic {
            classes,
            per_class,
            channels,
            height,
            width,
            noise_sigma,
            ..
        } = d.source
        {
            if classes < 2 || per_class == 0 || channels == 0 || height == 0 || width == 0 {
                return bad("synthetic dataset dimensions must be >= 1 and classes >= 2".into());
            }
            if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
                return bad("synthetic noise_sigma must be finite and >= 0".into());
            }
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical JSON form with `out` and
    /// `workers` cleared.
    pub fn run_id(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        c.workers = 1;
        let json = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Loaded, split and (optionally) standardized data.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub meta: DatasetMeta,
    pub warnings: Vec<String>,
}

impl DatasetConfig {
    pub fn prepare(&self) -> Result<PreparedData, LoadError> {
        let mut warnings = Vec::new();
        let name = self.name.as_str();
        let split_seed = derive_seed(SPLIT_TAG, 0);
        let split_one = |ds: Dataset| -> Result<(Dataset, Dataset), LoadError> {
            let (tr, va) = split(&ds, self.val_fraction, split_seed)?;
            Ok((tr.with_split_tag(SplitTag::Train), va.with_split_tag(SplitTag::Validation)))
        };
        let (mut train, mut val) = match &self.source {
            DatasetSource::IdxDir { path, verify_checksums } => {
                if *verify_checksums {
                    datasets::verify_mnist_subset(path)?;
                }
                datasets::load_idx_dir(path, name)?
            }
            DatasetSource::Idx {
                train_images,
                train_labels,
                val_images,
                val_labels,
            } => {
                let tr = datasets::load_idx(train_images, train_labels, name, SplitTag::Train, None)?;
                let va = datasets::load_idx(val_images, val_labels, name, SplitTag::Validation, None)?;
                let k = tr.num_classes().max(va.num_classes());
                let relabel = |d: &Dataset, tag| Dataset::new(name, tag, d.images().clone(), d.labels().to_vec(), k);
                (relabel(&tr, SplitTag::Train)?, relabel(&va, SplitTag::Validation)?)
            }
            DatasetSource::Usps { train, val } => {
                let (tr, w) = datasets::load_usps(train, name, SplitTag::Train, Some(datasets::USPS_REFERENCE_TRAIN))?;
                warnings.extend(w.iter().map(LoadWarning::to_string));
                match val {
                    Some(v) => (tr, datasets::load_usps(v, name, SplitTag::Validation, None)?.0),
                    None => split_one(tr)?,
                }
            }
            DatasetSource::Fixture { train, val } => {
                let tr = datasets::load_fixture(train, name, SplitTag::Train)?;
                match val {
                    Some(v) => (tr, datasets::load_fixture(v, name, SplitTag::Validation)?),
                    None => split_one(tr)?,
                }
            }
            DatasetSource::Synthetic {
                classes,
                per_class,
                channels,
                height,
                width,
                noise_sigma,
                data_seed,
            } => {
                let ds = synthesize(*classes, *per_class, *channels, *height, *width, *noise_sigma, *data_seed)?;
                let ds = Dataset::new(name, SplitTag::Train, ds.images().clone(), ds.labels().to_vec(), *classes)?;
                split_one(ds)?
            }
        };
        if let Some(n) = self.train_limit {
            train = train.head(n);
        }
        if let Some(n) = self.val_limit {
            val = val.head(n);
        }
        if self.shuffle_labels {
            train = train.with_shuffled_labels(derive_seed(LABEL_SHUFFLE_TAG, 0));
            val = val.with_shuffled_labels(derive_seed(LABEL_SHUFFLE_TAG, 1));
        }
        if self.normalize {
            let (tr, va, w) = normalize(&train, &val)?;
            for NormalizeWarning::DegenerateChannel(c) in w {
                warnings.push(format!("channel {c} is constant on the training split; divided by 1"));
            }
            train = tr;
            val = va;
        }
        if train.sample_shape() != val.sample_shape() || train.num_classes() != val.num_classes() {
            return Err(LoadError::Data(archsel_core::data::DataError::InvalidArgument(format!(
                "train is {:?} with {} classes, validation is {:?} with {}",
                train.sample_shape(),
                train.num_classes(),
                val.sample_shape(),
                val.num_classes()
            ))));
        }
        let meta = train.meta(val.len());
        Ok(PreparedData {
            train,
            val,
            meta,
            warnings,
        })
    }
}

impl SpaceConfig {
    pub fn build(&self, input_shape: [usize; 3], classes: usize) -> Result<SearchSpace, ConfigError> {
        let mut space = match self.preset.as_deref() {
            Some("default") => SearchSpace::default_for(input_shape, classes),
            _ => SearchSpace::new(self.params.clone(), input_shape, classes, self.pool_rule)
                .map_err(|e| ConfigError::Invalid(format!("space: {e}")))?,
        };
        space.pool_rule = self.pool_rule;
        Ok(space)
    }
}
