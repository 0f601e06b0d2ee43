//! `barl run | table | plot`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use barl_core::EnvKind;
use clap::{Parser, Subcommand};

use crate::config::parse_experiment;
use crate::exec::PoolExecutor;
use crate::experiment::{run, RunError};
use crate::logs::{collect_runs, run_dir, write_logs};
use crate::plot::{render_svg, LEARNING_CURVE_SVG};
use crate::table::{build_table, table_csv, SAMPLE_COMPLEXITY};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILURE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "barl", about = "Bayesian active RL with transition queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every strategy and seed in a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write sample_complexity.csv from completed runs.
    Table {
        #[arg(long)]
        out: PathBuf,
    },
    /// Write <env>/learning_curve.svg from completed runs.
    Plot {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out),
        Command::Table { out } => cmd_table(&out),
        Command::Plot { out } => cmd_plot(&out),
    }
}

fn cmd_run(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> i32 {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let mut exp = match parse_experiment(&text) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(s) = seed {
        exp.seeds = vec![s];
    }
    if let Some(o) = out {
        exp.out = o;
    }
    let exec = PoolExecutor::from_env();
    for cfg in exp.runs() {
        let dir = run_dir(&exp.out, &cfg);
        eprintln!("running {} {} seed {}", cfg.env.name(), cfg.strategy, cfg.seed);
        let log = match run(&cfg, &exec) {
            Ok(l) => l,
            Err(e @ RunError::Config(_)) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_FAILURE;
            }
        };
        if let Err(e) = write_logs(&log, &dir) {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
        match log.queries_to_solved() {
            Some(n) => eprintln!("  solved after {n} queries"),
            None => eprintln!("  not solved within {} queries", log.queries.len()),
        }
    }
    EXIT_OK
}

fn cmd_table(out: &Path) -> i32 {
    let runs = match collect_runs(out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    let csv = table_csv(&build_table(&runs));
    let path = out.join(SAMPLE_COMPLEXITY);
    if let Err(e) = fs::write(&path, &csv) {
        eprintln!("error: {}: {e}", path.display());
        return EXIT_FAILURE;
    }
    print!("{csv}");
    EXIT_OK
}

fn cmd_plot(out: &Path) -> i32 {
    let runs = match collect_runs(out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAILURE;
        }
    };
    for env in EnvKind::ALL {
        let subset: Vec<_> = runs.iter().filter(|r| r.config.env == env).cloned().collect();
        if subset.is_empty() {
            continue;
        }
        let path = out.join(env.name()).join(LEARNING_CURVE_SVG);
        if let Err(e) = fs::write(&path, render_svg(env.name(), &subset)) {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_FAILURE;
        }
        eprintln!("wrote {}", path.display());
    }
    EXIT_OK
}
