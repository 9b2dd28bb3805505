//! Report files. Each report is written as `<kind>_<run id>.json` and
//! `<kind>_<run id>.csv`; correlation and timing reports add
//! `<kind>_<run id>_scatter.csv`. CSV files are UTF-8, comma separated,
//! quoted where needed, with `.` as decimal separator.
//!
//! Every field or column that holds a measured time has `wall_time` in its
//! name; [`strip_wall_time_csv`] and [`strip_wall_time_json`] drop them so
//! reruns can be compared byte for byte. Timing ratios are measurements
//! too and are not expected to reproduce.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use archsel_core::estimate::EvaluationResult;
use serde::{Deserialize, Serialize};

use crate::harness::{CorrelationReport, EstimateReport, SearchReport, TimingReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Estimate(EstimateReport),
    Correlation(CorrelationReport),
    Timing(TimingReport),
    Search(SearchReport),
}

impl Report {
    pub fn kind(&self) -> &'static str {
        match self {
            Report::Estimate(_) => "estimate",
            Report::Correlation(_) => "correlation",
            Report::Timing(_) => "timing",
            Report::Search(_) => "search",
        }
    }

    pub fn run_id(&self) -> &str {
        match self {
            Report::Estimate(r) => &r.run_id,
            Report::Correlation(r) => &r.run_id,
            Report::Timing(r) => &r.run_id,
            Report::Search(r) => &r.run_id,
        }
    }

    pub fn stem(&self) -> String {
        format!("{}_{}", self.kind(), self.run_id())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The main table: one row per architecture, evaluation or estimate.
    pub fn csv(&self) -> String {
        match self {
            Report::Estimate(r) => table(EVALUATION_HEADER.iter().map(|s| s.to_string()).collect(), vec![evaluation_row(&r.result)]),
            Report::Correlation(r) => correlation_csv(r),
            Report::Timing(r) => timing_csv(r),
            Report::Search(r) => search_csv(r),
        }
    }

    /// Heuristic against baseline scores, for plotting.
    pub fn scatter_csv(&self) -> Option<String> {
        let rows: Vec<(&str, &EvaluationResult, &EvaluationResult)> = match self {
            Report::Correlation(r) => r.rows.iter().map(|x| (x.arch_id.as_str(), &x.full, &x.heuristic)).collect(),
            Report::Timing(r) => r.rows.iter().map(|x| (x.arch_id.as_str(), &x.full, &x.heuristic)).collect(),
            _ => return None,
        };
        let header = ["arch_id", "full_mean", "full_best", "heuristic_best", "heuristic_mean"];
        Some(table(
            header.iter().map(|s| s.to_string()).collect(),
            rows.into_iter()
                .map(|(id, f, h)| vec![id.to_string(), num(f.mean), num(f.best), num(h.best), num(h.mean)])
                .collect(),
        ))
    }
}

/// Writes the report files into `dir`, creating it if needed, and returns
/// their paths.
pub fn emit_report(report: &Report, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = report.stem();
    let mut written = Vec::new();
    let mut put = |name: String, body: String| -> io::Result<()> {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    put(format!("{stem}.json"), report.to_json())?;
    put(format!("{stem}.csv"), report.csv())?;
    if let Some(s) = report.scatter_csv() {
        put(format!("{stem}_scatter.csv"), s)?;
    }
    Ok(written)
}

pub fn read_report(path: &Path) -> io::Result<Report> {
    let text = fs::read_to_string(path)?;
    Report::from_json(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// Shortest decimal that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v}")
}

fn joined(vs: &[f64]) -> String {
    vs.iter().map(|&v| num(v)).collect::<Vec<_>>().join(";")
}

fn table(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        debug_assert_eq!(r.len(), header.len());
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("UTF-8 fields")
}

/// Columns of one [`EvaluationResult`] row.
pub const EVALUATION_HEADER: [&str; 9] = [
    "arch_id",
    "mode",
    "n_seeds",
    "best",
    "mean",
    "diverged_count",
    "wall_time_seconds",
    "workers",
    "seed_errors",
];

/// One CSV row for an [`EvaluationResult`]; `seed_errors` is
/// semicolon-separated in seed order.
pub fn evaluation_row(r: &EvaluationResult) -> Vec<String> {
    vec![
        r.arch_id.clone(),
        r.mode.name().into(),
        r.seed_errors.len().to_string(),
        num(r.best),
        num(r.mean),
        r.diverged_count.to_string(),
        num(r.wall_time_seconds),
        r.workers.to_string(),
        joined(&r.seed_errors),
    ]
}

fn mode_columns(prefix: &str) -> Vec<String> {
    ["mean", "best", "diverged_count", "wall_time_seconds", "seed_errors"]
        .iter()
        .map(|c| format!("{prefix}_{c}"))
        .collect()
}

fn mode_values(r: &EvaluationResult) -> Vec<String> {
    vec![
        num(r.mean),
        num(r.best),
        r.diverged_count.to_string(),
        num(r.wall_time_seconds),
        joined(&r.seed_errors),
    ]
}

fn correlation_csv(r: &CorrelationReport) -> String {
    let with_rw = r.rows.iter().any(|x| x.random_weights.is_some());
    let mut header = vec!["arch_id".to_string(), "param_count".into()];
    header.extend(mode_columns("full"));
    header.extend(mode_columns("heuristic"));
    if with_rw {
        header.extend(mode_columns("random_weights"));
    }
    let rows = r
        .rows
        .iter()
        .map(|x| {
            let mut v = vec![x.arch_id.clone(), x.param_count.to_string()];
            v.extend(mode_values(&x.full));
            v.extend(mode_values(&x.heuristic));
            if with_rw {
                match &x.random_weights {
                    Some(e) => v.extend(mode_values(e)),
                    None => v.extend(std::iter::repeat_n(String::new(), 5)),
                }
            }
            v
        })
        .collect();
    table(header, rows)
}

fn timing_csv(r: &TimingReport) -> String {
    let mut header = vec!["arch_id".to_string(), "param_count".into()];
    for m in ["full", "heuristic", "random_weights"] {
        header.push(format!("{m}_n_seeds"));
        header.push(format!("{m}_wall_time_seconds"));
        header.push(format!("{m}_best"));
    }
    header.push("heuristic_wall_time_ratio".into());
    header.push("random_weights_wall_time_ratio".into());
    let rows = r
        .rows
        .iter()
        .map(|x| {
            let mut v = vec![x.arch_id.clone(), x.param_count.to_string()];
            for e in [&x.full, &x.heuristic, &x.random_weights] {
                v.push(e.seed_errors.len().to_string());
                v.push(num(e.wall_time_seconds));
                v.push(num(e.best));
            }
            v.push(num(x.heuristic_ratio));
            v.push(num(x.random_weights_ratio));
            v
        })
        .collect();
    table(header, rows)
}

fn search_csv(r: &SearchReport) -> String {
    let d = r.space.dim();
    let mut header = vec!["index".to_string(), "phase".into()];
    header.extend(r.space.params.iter().map(|p| format!("x_{}", p.name)));
    header.extend(
        ["arch_id", "objective", "best_so_far", "status", "resamples", "wall_time_seconds"]
            .iter()
            .map(|s| s.to_string()),
    );
    let rows = r
        .log
        .observations
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let mut v = vec![i.to_string(), phase_name(o.phase).into()];
            v.extend(o.x.iter().take(d).map(|&c| num(c)));
            v.push(o.label.clone().unwrap_or_default());
            v.push(num(o.value));
            v.push(num(o.best_so_far));
            v.push(status_name(&o.status).into());
            v.push(o.resamples.to_string());
            v.push(num(o.wall_time));
            v
        })
        .collect();
    table(header, rows)
}

fn phase_name(p: archsel_core::bayesopt::Phase) -> &'static str {
    match p {
        archsel_core::bayesopt::Phase::Init => "init",
        archsel_core::bayesopt::Phase::Infill => "infill",
    }
}

fn status_name(s: &archsel_core::bayesopt::Status) -> &'static str {
    match s {
        archsel_core::bayesopt::Status::Ok => "ok",
        archsel_core::bayesopt::Status::Infeasible => "infeasible",
        archsel_core::bayesopt::Status::Failed => "failed",
    }
}

/// Drops every column whose header contains `wall_time`.
pub fn strip_wall_time_csv(text: &str) -> String {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
    let records: Vec<csv::StringRecord> = rdr.records().filter_map(Result::ok).collect();
    let Some(header) = records.first() else {
        return String::new();
    };
    let keep: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| !h.contains("wall_time"))
        .map(|(i, _)| i)
        .collect();
    let rows = records
        .iter()
        .map(|r| keep.iter().map(|&i| r.get(i).unwrap_or("").to_string()).collect())
        .collect::<Vec<Vec<String>>>();
    let (h, body) = rows.split_first().expect("header present");
    table(h.clone(), body.to_vec())
}

/// Removes, at any depth, object keys containing `wall_time`.
pub fn strip_wall_time_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|k, _| !k.contains("wall_time"));
            m.values_mut().for_each(strip_wall_time_json);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_wall_time_json),
        _ => {}
    }
}

/// Compares two report files of the same kind, ignoring wall times.
/// `.json` files are compared as parsed values, anything else as CSV.
pub fn same_except_wall_time(a: &Path, b: &Path) -> io::Result<bool> {
    let (ta, tb) = (fs::read_to_string(a)?, fs::read_to_string(b)?);
    if a.extension().is_some_and(|e| e == "json") {
        let parse = |t: &str| -> io::Result<serde_json::Value> {
            let mut v: serde_json::Value =
                serde_json::from_str(t).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            strip_wall_time_json(&mut v);
            Ok(v)
        };
        Ok(serde_json::to_string(&parse(&ta)?)? == serde_json::to_string(&parse(&tb)?)?)
    } else {
        Ok(strip_wall_time_csv(&ta) == strip_wall_time_csv(&tb))
    }
}
