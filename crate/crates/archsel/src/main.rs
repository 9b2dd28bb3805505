use std::path::PathBuf;
use std::process::ExitCode;

use archsel::config::{ConfigError, ExperimentConfig, ExperimentKind, Overrides};
use archsel::harness::{Experiment, HarnessError};
use archsel::report::{emit_report, read_report, Report};
use archsel_core::estimate::Mode;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "archsel", version, about = "Fast CNN architecture selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `synthetic`, an IDX directory, a fixture file or a USPS text file.
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Heuristic,
    RandomWeights,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => Mode::Full,
            ModeArg::Heuristic => Mode::Heuristic,
            ModeArg::RandomWeights => Mode::RandomWeights,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Score one architecture of the config with one estimator.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Index into the config's architecture list.
        #[arg(long, default_value_t = 0)]
        arch: usize,
        #[arg(long, value_enum, default_value = "heuristic")]
        mode: ModeArg,
    },
    /// Full training against the heuristic on every architecture.
    Correlate {
        #[command(flatten)]
        common: Common,
    },
    /// Wall time of all three estimators on every architecture.
    Time {
        #[command(flatten)]
        common: Common,
    },
    /// Model-based architecture search with full-training confirmation.
    Search {
        #[command(flatten)]
        common: Common,
    },
    /// Rewrite the CSV and JSON files of a stored JSON report.
    Report {
        /// A `<kind>_<run id>.json` file.
        #[arg(long)]
        from: PathBuf,
        /// Defaults to the directory of `--from`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, kind: Option<ExperimentKind>) -> Result<(Experiment, PathBuf), HarnessError> {
    let overrides = Overrides {
        seed: common.seed,
        workers: common.workers,
        out: common.out.clone(),
        dataset: common.dataset.clone(),
    };
    let text = std::fs::read_to_string(&common.config).map_err(|source| ConfigError::Io {
        path: common.config.clone(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| match e {
        ConfigError::Parse { source, .. } => ConfigError::Parse {
            path: common.config.clone(),
            source,
        },
        e => e,
    })?;
    if let Some(k) = kind {
        cfg.kind = k;
    }
    let base = common.config.parent().map(PathBuf::from).unwrap_or_default();
    let loaded = cfg.finish(&base, &overrides)?;
    let out = loaded.config.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    Ok((Experiment::prepare(loaded)?, out))
}

fn summary(report: &Report) -> String {
    let f = |v: Option<f64>| v.map_or("undefined".to_string(), |r| format!("{r:.4}"));
    match report {
        Report::Estimate(r) => format!(
            "{} {}: best {:.4}, mean {:.4}, {} diverged, {:.1}s",
            r.result.arch_id, r.result.mode, r.result.best, r.result.mean, r.result.diverged_count, r.result.wall_time_seconds
        ),
        Report::Correlation(r) => format!(
            "{} architectures: corr_mean_best {}, corr_best_best {}{}",
            r.n_architectures,
            f(r.corr_mean_best),
            f(r.corr_best_best),
            if r.high_noise { " (high noise)" } else { "" }
        ),
        Report::Timing(r) => format!(
            "ratio_heuristic {:.4}, ratio_random_weights {:.4} over {} architectures",
            r.ratio_heuristic,
            r.ratio_random_weights,
            r.rows.len()
        ),
        Report::Search(r) => format!(
            "incumbent {} (objective {:.4}); confirmation best {:.4}, mean {:.4}",
            r.incumbent_spec.id(),
            r.incumbent_value,
            r.confirmation.best,
            r.confirmation.mean
        ),
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let (report, out) = match cli.command {
        Command::Report { from, out } => {
            let report = read_report(&from).map_err(|e| ConfigError::Invalid(format!("{}: {e}", from.display())))?;
            let dir = out.unwrap_or_else(|| from.parent().map(PathBuf::from).unwrap_or_default());
            (report, dir)
        }
        Command::Estimate { common, arch, mode } => {
            let (exp, out) = load(&common, None)?;
            (Report::Estimate(exp.estimate_one(arch, mode.into())?), out)
        }
        Command::Correlate { common } => {
            let (exp, out) = load(&common, Some(ExperimentKind::Correlation))?;
            (exp.run()?, out)
        }
        Command::Time { common } => {
            let (exp, out) = load(&common, Some(ExperimentKind::Timing))?;
            (exp.run()?, out)
        }
        Command::Search { common } => {
            let (exp, out) = load(&common, Some(ExperimentKind::Search))?;
            (exp.run()?, out)
        }
    };
    for p in emit_report(&report, &out)? {
        println!("wrote {}", p.display());
    }
    println!("{}", summary(&report));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
