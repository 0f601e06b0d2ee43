//! Run output files.
//!
//! Each run directory holds:
//!
//! - `queries.csv`: `iteration,s_0..,a_0..,next_s_0..,acq_value`, one row per
//!   transition in query order. `acq_value` is `NaN` for queries not chosen by
//!   an acquisition function.
//! - `learning_curve.csv`: `n_queries,eval_return_mean,eval_return_se`, one row
//!   per evaluation.
//! - `timing.csv`: `iteration,phase,seconds`.
//! - `meta.txt`: the resolved run config as `key = value` lines plus
//!   `gt_return` and `rand_return`.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! parsing a file gives back the exact values written.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{parse_kv, parse_run, RunConfig};
use crate::experiment::{EvalRecord, Phase, QueryRecord, RunLog, Threshold, TimingRecord};

pub const QUERIES: &str = "queries.csv";
pub const LEARNING_CURVE: &str = "learning_curve.csv";
pub const TIMING: &str = "timing.csv";
pub const META: &str = "meta.txt";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LogError + '_ {
    move |source| LogError::Io { path: path.to_path_buf(), source }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Output directory of one run.
pub fn run_dir(out: &Path, config: &RunConfig) -> PathBuf {
    out.join(config.env.name()).join(config.strategy.name()).join(format!("seed_{}", config.seed))
}

pub fn queries_csv(queries: &[QueryRecord], state_dim: usize) -> String {
    let action_dim = queries.first().map_or(0, |q| q.input.len() - state_dim);
    let mut out = String::from("iteration");
    for i in 0..state_dim {
        write!(out, ",s_{i}").unwrap();
    }
    for i in 0..action_dim {
        write!(out, ",a_{i}").unwrap();
    }
    for i in 0..state_dim {
        write!(out, ",next_s_{i}").unwrap();
    }
    out.push_str(",acq_value\n");
    for q in queries {
        write!(out, "{}", q.iteration).unwrap();
        for v in q.input.iter().chain(&q.next_state) {
            write!(out, ",{}", fmt_f64(*v)).unwrap();
        }
        writeln!(out, ",{}", fmt_f64(q.acq_value)).unwrap();
    }
    out
}

pub fn learning_curve_csv(evals: &[EvalRecord]) -> String {
    let mut out = String::from("n_queries,eval_return_mean,eval_return_se\n");
    for e in evals {
        writeln!(out, "{},{},{}", e.n_queries, fmt_f64(e.mean), fmt_f64(e.se)).unwrap();
    }
    out
}

pub fn timing_csv(timings: &[TimingRecord]) -> String {
    let mut out = String::from("iteration,phase,seconds\n");
    for t in timings {
        writeln!(out, "{},{},{}", t.iteration, t.phase, fmt_f64(t.seconds)).unwrap();
    }
    out
}

pub fn meta_txt(config: &RunConfig, threshold: &Threshold) -> String {
    let mut out = config.to_kv();
    writeln!(out, "gt_return = {}", fmt_f64(threshold.gt_return)).unwrap();
    writeln!(out, "rand_return = {}", fmt_f64(threshold.rand_return)).unwrap();
    out
}

pub fn write_logs(log: &RunLog, dir: &Path) -> Result<(), LogError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let state_dim = log.config.env_spec().state_dim;
    let files = [
        (QUERIES, queries_csv(&log.queries, state_dim)),
        (LEARNING_CURVE, learning_curve_csv(&log.evals)),
        (TIMING, timing_csv(&log.timings)),
        (META, meta_txt(&log.config, &log.threshold)),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))?;
    }
    Ok(())
}

/// CSV rows after the header, with 1-based line numbers.
fn rows<'a>(path: &'a Path, text: &'a str, columns: Option<usize>) -> impl Iterator<Item = Result<(usize, Vec<&'a str>), LogError>> + 'a {
    text.lines().enumerate().skip(1).filter(|(_, l)| !l.is_empty()).map(move |(i, l)| {
        let fields: Vec<&str> = l.split(',').collect();
        match columns {
            Some(n) if fields.len() != n => Err(LogError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {n} fields, got {}", fields.len()),
            }),
            _ => Ok((i + 1, fields)),
        }
    })
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T, LogError> {
    s.parse().map_err(|_| LogError::Parse { path: path.to_path_buf(), line, message: format!("bad field `{s}`") })
}

pub fn parse_queries(path: &Path, text: &str, state_dim: usize) -> Result<Vec<QueryRecord>, LogError> {
    let header_len = text.lines().next().map_or(0, |h| h.split(',').count());
    if header_len < 2 * state_dim + 2 {
        return Err(LogError::Parse { path: path.to_path_buf(), line: 1, message: "header too short".into() });
    }
    let input_dim = header_len - state_dim - 2;
    rows(path, text, Some(header_len))
        .map(|r| {
            let (line, f) = r?;
            let nums: Vec<f64> = f[1..].iter().map(|s| field(path, line, s)).collect::<Result<_, _>>()?;
            Ok(QueryRecord {
                iteration: field(path, line, f[0])?,
                input: nums[..input_dim].to_vec(),
                next_state: nums[input_dim..input_dim + state_dim].to_vec(),
                acq_value: nums[input_dim + state_dim],
            })
        })
        .collect()
}

pub fn parse_learning_curve(path: &Path, text: &str) -> Result<Vec<EvalRecord>, LogError> {
    rows(path, text, Some(3))
        .map(|r| {
            let (line, f) = r?;
            Ok(EvalRecord {
                iteration: 0,
                n_queries: field(path, line, f[0])?,
                mean: field(path, line, f[1])?,
                se: field(path, line, f[2])?,
            })
        })
        .collect()
}

pub fn parse_timing(path: &Path, text: &str) -> Result<Vec<TimingRecord>, LogError> {
    rows(path, text, Some(3))
        .map(|r| {
            let (line, f) = r?;
            let phase = Phase::parse(f[1]).ok_or_else(|| LogError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("unknown phase `{}`", f[1]),
            })?;
            Ok(TimingRecord { iteration: field(path, line, f[0])?, phase, seconds: field(path, line, f[2])? })
        })
        .collect()
}

pub fn parse_meta(path: &Path, text: &str) -> Result<(RunConfig, Threshold), LogError> {
    let bad = |message: String| LogError::Parse { path: path.to_path_buf(), line: 0, message };
    let config = parse_run(text, &["gt_return", "rand_return"]).map_err(|e| bad(e.to_string()))?;
    let map = parse_kv(text).map_err(|e| bad(e.to_string()))?;
    let get = |k: &str| -> Result<f64, LogError> {
        map.get(k).ok_or_else(|| bad(format!("missing `{k}`")))?.parse().map_err(|_| bad(format!("bad `{k}`")))
    };
    Ok((config, Threshold { gt_return: get("gt_return")?, rand_return: get("rand_return")? }))
}

/// The parts of a run directory needed for tables and plots.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub threshold: Threshold,
    pub evals: Vec<EvalRecord>,
}

impl RunSummary {
    pub fn queries_to_solved(&self) -> Option<usize> {
        crate::experiment::queries_to_solved(&self.evals, &self.threshold)
    }
}

fn read(path: &Path) -> Result<String, LogError> {
    fs::read_to_string(path).map_err(io_err(path))
}

pub fn read_summary(dir: &Path) -> Result<RunSummary, LogError> {
    let meta = dir.join(META);
    let (config, threshold) = parse_meta(&meta, &read(&meta)?)?;
    let lc = dir.join(LEARNING_CURVE);
    let evals = parse_learning_curve(&lc, &read(&lc)?)?;
    Ok(RunSummary { dir: dir.to_path_buf(), config, threshold, evals })
}

pub fn read_queries(dir: &Path, state_dim: usize) -> Result<Vec<QueryRecord>, LogError> {
    let path = dir.join(QUERIES);
    parse_queries(&path, &read(&path)?, state_dim)
}

/// Every completed run under `out` (directories with both `meta.txt` and
/// `learning_curve.csv`), sorted by path.
pub fn collect_runs(out: &Path) -> Result<Vec<RunSummary>, LogError> {
    let mut dirs = Vec::new();
    for env in sorted_subdirs(out)? {
        for strategy in sorted_subdirs(&env)? {
            for seed in sorted_subdirs(&strategy)? {
                if seed.join(META).is_file() && seed.join(LEARNING_CURVE).is_file() {
                    dirs.push(seed);
                }
            }
        }
    }
    dirs.iter().map(|d| read_summary(d)).collect()
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<PathBuf>, LogError> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    v.sort();
    Ok(v)
}
