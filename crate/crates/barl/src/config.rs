//! Run and experiment configuration.
//!
//! Config files are flat `key = value` lines with dotted keys; `#` starts a
//! comment. `env` selects the per-environment defaults, every other key
//! overrides one field:
//!
//! ```text
//! env = pendulum
//! budget = 200
//! candidates = 1000
//! path_samples = 15
//! eval.episodes = 5
//! eval.period = 5
//! refit_period = 10
//! fit.restarts = 5
//! stop_when_solved = false
//! plan.rollout.horizon = 20      # also base_samples, elites, iterations,
//! plan.eval.iterations = 3       # replan_period, beta, gamma, xi
//! seeds = 0,1,2,3,4
//! strategies = barl,eig_t,random,rollout_mpc
//! out = results
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use barl_core::{EnvKind, EnvSpec, PlanSpec};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config error: {0}")]
pub struct ConfigError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Data-acquisition strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    Barl,
    EigT,
    Random,
    RolloutMpc,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Barl, Strategy::EigT, Strategy::Random, Strategy::RolloutMpc];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Barl => "barl",
            Strategy::EigT => "eig_t",
            Strategy::Random => "random",
            Strategy::RolloutMpc => "rollout_mpc",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .map_or_else(|| err(format!("unknown strategy `{s}`")), Ok)
    }
}

/// Everything one seeded run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvKind,
    pub budget: usize,
    pub candidates: usize,
    pub path_samples: usize,
    pub eval_episodes: usize,
    /// Iterations between evaluations of the posterior-mean policy.
    pub eval_period: usize,
    pub refit_period: usize,
    pub fit_restarts: usize,
    pub strategy: Strategy,
    /// Budget for the MPC runs on posterior samples.
    pub rollout_plan: PlanSpec,
    /// Budget for the evaluation and ground-truth MPC runs.
    pub eval_plan: PlanSpec,
    pub seed: u64,
    /// End the run at the first evaluation that reaches the solved band.
    pub stop_when_solved: bool,
}

impl RunConfig {
    pub fn defaults(env: EnvKind) -> Self {
        let spec = EnvSpec::from_kind(env);
        let (budget, eval_period) = match env {
            EnvKind::Pendulum => (200, 5),
            EnvKind::Cartpole => (300, 10),
            EnvKind::LavaPath => (100, 5),
        };
        let plan = spec.default_plan_spec();
        Self {
            env,
            budget,
            candidates: 1000,
            path_samples: 15,
            eval_episodes: 5,
            eval_period,
            refit_period: 10,
            fit_restarts: 5,
            strategy: Strategy::Barl,
            rollout_plan: plan.clone(),
            eval_plan: plan,
            seed: 0,
            stop_when_solved: false,
        }
    }

    pub fn env_spec(&self) -> EnvSpec {
        EnvSpec::from_kind(self.env)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.candidates == 0 || self.path_samples == 0 || self.eval_episodes == 0 {
            return err("candidates, path_samples and eval.episodes must be positive");
        }
        if self.eval_period == 0 || self.refit_period == 0 {
            return err("eval.period and refit_period must be positive");
        }
        for (name, plan) in [("rollout", &self.rollout_plan), ("eval", &self.eval_plan)] {
            plan.validate().map_err(|e| ConfigError(format!("plan.{name}: {e}")))?;
        }
        Ok(())
    }

    /// All resolved fields as `key = value` lines, parseable by [`parse_run`].
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("env", self.env.name().into());
        put("strategy", self.strategy.name().into());
        put("seed", self.seed.to_string());
        put("budget", self.budget.to_string());
        put("candidates", self.candidates.to_string());
        put("path_samples", self.path_samples.to_string());
        put("eval.episodes", self.eval_episodes.to_string());
        put("eval.period", self.eval_period.to_string());
        put("refit_period", self.refit_period.to_string());
        put("fit.restarts", self.fit_restarts.to_string());
        put("stop_when_solved", self.stop_when_solved.to_string());
        for (name, p) in [("rollout", &self.rollout_plan), ("eval", &self.eval_plan)] {
            put(&format!("plan.{name}.base_samples"), p.base_samples.to_string());
            put(&format!("plan.{name}.elites"), p.elites.to_string());
            put(&format!("plan.{name}.horizon"), p.horizon.to_string());
            put(&format!("plan.{name}.iterations"), p.iterations.to_string());
            put(&format!("plan.{name}.replan_period"), p.replan_period.to_string());
            put(&format!("plan.{name}.beta"), p.beta.to_string());
            put(&format!("plan.{name}.gamma"), p.gamma.to_string());
            put(&format!("plan.{name}.xi"), p.xi.to_string());
        }
        out
    }
}

/// A batch of runs: every strategy × every seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    pub strategies: Vec<Strategy>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.run.validate()?;
        if self.seeds.is_empty() {
            return err("seeds must be nonempty");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return err("seeds must be distinct");
        }
        if self.strategies.is_empty() {
            return err("strategies must be nonempty");
        }
        Ok(())
    }

    pub fn runs(&self) -> impl Iterator<Item = RunConfig> + '_ {
        self.strategies.iter().flat_map(move |&strategy| {
            self.seeds.iter().map(move |&seed| RunConfig { strategy, seed, ..self.run.clone() })
        })
    }
}

/// Splits `key = value` lines; later keys override earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return err(format!("line {}: expected `key = value`", lineno + 1));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError(format!("bad value `{v}` for `{key}`")))
}

fn apply_plan(plan: &mut PlanSpec, field: &str, key: &str, v: &str) -> Result<(), ConfigError> {
    match field {
        "base_samples" => plan.base_samples = num(key, v)?,
        "elites" => plan.elites = num(key, v)?,
        "horizon" => plan.horizon = num(key, v)?,
        "iterations" => plan.iterations = num(key, v)?,
        "replan_period" => plan.replan_period = num(key, v)?,
        "beta" => plan.beta = num(key, v)?,
        "gamma" => plan.gamma = num(key, v)?,
        "xi" => plan.xi = num(key, v)?,
        _ => return err(format!("unknown key `{key}`")),
    }
    Ok(())
}

fn env_kind(name: &str) -> Result<EnvKind, ConfigError> {
    EnvSpec::by_name(name).map(|e| e.kind).map_err(|e| ConfigError(e.to_string()))
}

/// Applies run-level keys; experiment-level keys are returned untouched.
fn build_run(map: &BTreeMap<String, String>) -> Result<(RunConfig, BTreeMap<String, String>), ConfigError> {
    let Some(env) = map.get("env") else {
        return err("missing required key `env`");
    };
    let mut cfg = RunConfig::defaults(env_kind(env)?);
    let mut rest = BTreeMap::new();
    for (k, v) in map {
        match k.as_str() {
            "env" => {}
            "strategy" => cfg.strategy = v.parse()?,
            "seed" => cfg.seed = num(k, v)?,
            "budget" => cfg.budget = num(k, v)?,
            "candidates" => cfg.candidates = num(k, v)?,
            "path_samples" => cfg.path_samples = num(k, v)?,
            "eval.episodes" => cfg.eval_episodes = num(k, v)?,
            "eval.period" => cfg.eval_period = num(k, v)?,
            "refit_period" => cfg.refit_period = num(k, v)?,
            "fit.restarts" => cfg.fit_restarts = num(k, v)?,
            "stop_when_solved" => cfg.stop_when_solved = num(k, v)?,
            _ => {
                if let Some(field) = k.strip_prefix("plan.rollout.") {
                    apply_plan(&mut cfg.rollout_plan, field, k, v)?;
                } else if let Some(field) = k.strip_prefix("plan.eval.") {
                    apply_plan(&mut cfg.eval_plan, field, k, v)?;
                } else {
                    rest.insert(k.clone(), v.clone());
                }
            }
        }
    }
    Ok((cfg, rest))
}

/// Parses a single-run config (e.g. a `meta.txt`); unknown keys are errors
/// unless listed in `extra_ok`.
pub fn parse_run(text: &str, extra_ok: &[&str]) -> Result<RunConfig, ConfigError> {
    let (cfg, rest) = build_run(&parse_kv(text)?)?;
    if let Some(k) = rest.keys().find(|k| !extra_ok.contains(&k.as_str())) {
        return err(format!("unknown key `{k}`"));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_experiment(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let (run, rest) = build_run(&parse_kv(text)?)?;
    let mut exp = ExperimentConfig { seeds: vec![run.seed], out: PathBuf::from("results"), strategies: vec![run.strategy], run };
    for (k, v) in &rest {
        match k.as_str() {
            "seeds" => {
                exp.seeds = v.split(',').map(|s| num(k, s.trim())).collect::<Result<_, _>>()?;
            }
            "strategies" => {
                exp.strategies = v.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
            }
            "out" => exp.out = PathBuf::from(v),
            _ => return err(format!("unknown key `{k}`")),
        }
    }
    exp.validate()?;
    Ok(exp)
}
