//! Queries-to-solved summary across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use barl_core::EnvKind;

use crate::config::Strategy;
use crate::logs::RunSummary;

pub const SAMPLE_COMPLEXITY: &str = "sample_complexity.csv";

/// Median where `None` (never solved) ranks above every count. `None` when
/// the median itself lands on an unsolved run.
pub fn median_queries(values: &[Option<usize>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<Option<usize>> = values.to_vec();
    v.sort_by_key(|x| x.unwrap_or(usize::MAX));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2].map(|x| x as f64)
    } else {
        Some((v[n / 2 - 1]? as f64 + v[n / 2]? as f64) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub env: EnvKind,
    pub strategy: Strategy,
    pub solved_at: Vec<Option<usize>>,
}

impl TableRow {
    pub fn median(&self) -> Option<f64> {
        median_queries(&self.solved_at)
    }
}

/// One row per (env, strategy), in a fixed order; seeds in ascending order.
pub fn build_table(runs: &[RunSummary]) -> Vec<TableRow> {
    let mut groups: BTreeMap<(usize, Strategy), Vec<(u64, Option<usize>)>> = BTreeMap::new();
    for r in runs {
        let env_rank = EnvKind::ALL.iter().position(|&k| k == r.config.env).expect("known env");
        groups.entry((env_rank, r.config.strategy)).or_default().push((r.config.seed, r.queries_to_solved()));
    }
    groups
        .into_iter()
        .map(|((env_rank, strategy), mut seeds)| {
            seeds.sort_by_key(|s| s.0);
            TableRow { env: EnvKind::ALL[env_rank], strategy, solved_at: seeds.into_iter().map(|s| s.1).collect() }
        })
        .collect()
}

fn fmt_count(x: Option<usize>) -> String {
    x.map_or_else(|| "N/A".into(), |v| v.to_string())
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("env,strategy,seeds,solved,median_queries_to_solved,per_seed\n");
    for r in rows {
        let solved = r.solved_at.iter().filter(|x| x.is_some()).count();
        let median = r.median().map_or_else(|| "N/A".into(), |m| m.to_string());
        let per_seed: Vec<String> = r.solved_at.iter().map(|&x| fmt_count(x)).collect();
        writeln!(out, "{},{},{},{},{},{}", r.env.name(), r.strategy, r.solved_at.len(), solved, median, per_seed.join(" "))
            .unwrap();
    }
    out
}
