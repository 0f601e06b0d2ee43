//! The active-learning loop, its baselines, and policy evaluation.

use std::fmt;
use std::time::Instant;

use barl_core::acquisition::{rollout_paths, sample_paths, score_eig_t};
use barl_core::{
    choose_query, derive_seed, fit_hyperparams, rng_from_seed, Dataset, EigTauStar, EnvSpec,
    Executor, FitOptions, GpModel, KernelParams, MpcController, PlanSpec, TrainingSet, Transition,
};
use rand::RngCore;
use thiserror::Error;

use crate::config::{RunConfig, Strategy};

/// Normalized return at or above which a run counts as solved.
pub const SOLVED_FRACTION: f64 = 0.9;

// stream tags for derive_seed
const TAG_INIT: u64 = 1;
const TAG_FIT: u64 = 2;
const TAG_ITER: u64 = 3;
const TAG_EVAL_STARTS: u64 = 4;
const TAG_EVAL_PLAN: u64 = 5;
const TAG_RANDOM_POLICY: u64 = 6;
const TAG_EPISODE: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Fit,
    SamplePaths,
    RolloutTau,
    Score,
    Query,
    Eval,
}

impl Phase {
    pub const ALL: [Phase; 6] = [Phase::Fit, Phase::SamplePaths, Phase::RolloutTau, Phase::Score, Phase::Query, Phase::Eval];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Fit => "fit",
            Phase::SamplePaths => "sample_paths",
            Phase::RolloutTau => "rollout_tau",
            Phase::Score => "score",
            Phase::Query => "query",
            Phase::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    pub iteration: usize,
    pub input: Vec<f64>,
    pub next_state: Vec<f64>,
    /// NaN when the query was not chosen by an acquisition function.
    pub acq_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub n_queries: usize,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub seconds: f64,
}

/// Returns of the ground-truth MPC policy and of a uniform-random policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub gt_return: f64,
    pub rand_return: f64,
}

impl Threshold {
    pub fn new(gt_return: f64, rand_return: f64) -> Result<Self, RunError> {
        if !(gt_return > rand_return) {
            return Err(RunError::Misconfigured { gt: gt_return, rand: rand_return });
        }
        Ok(Self { gt_return, rand_return })
    }

    /// `(R - rand) / (gt - rand)`.
    pub fn normalized(&self, r: f64) -> f64 {
        (r - self.rand_return) / (self.gt_return - self.rand_return)
    }

    pub fn is_solved(&self, r: f64) -> bool {
        self.normalized(r) >= SOLVED_FRACTION
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: RunConfig,
    pub queries: Vec<QueryRecord>,
    pub evals: Vec<EvalRecord>,
    pub timings: Vec<TimingRecord>,
    pub threshold: Threshold,
    /// State sequences of every episode of the last evaluation.
    pub final_eval_states: Vec<Vec<Vec<f64>>>,
    /// Actions taken in those episodes.
    pub final_eval_actions: Vec<Vec<Vec<f64>>>,
    pub final_params: Option<KernelParams>,
}

impl RunLog {
    /// Queries used at the first evaluation in the solved band.
    pub fn queries_to_solved(&self) -> Option<usize> {
        queries_to_solved(&self.evals, &self.threshold)
    }

    pub fn dataset(&self) -> Dataset {
        dataset_from_queries(&self.queries, self.config.env_spec().state_dim)
    }
}

pub fn queries_to_solved(evals: &[EvalRecord], threshold: &Threshold) -> Option<usize> {
    evals.iter().find(|e| threshold.is_solved(e.mean)).map(|e| e.n_queries)
}

pub fn dataset_from_queries(queries: &[QueryRecord], state_dim: usize) -> Dataset {
    let action_dim = queries.first().map_or(0, |q| q.input.len() - state_dim);
    let mut d = Dataset::new(state_dim, action_dim);
    for q in queries {
        let (s, a) = q.input.split_at(state_dim);
        d.push(Transition::new(s.to_vec(), a.to_vec(), q.next_state.clone())).expect("consistent query records");
    }
    d
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{module} failed at iteration {iteration}: {message}")]
    Failed { module: &'static str, iteration: usize, message: String },
    #[error("environment misconfigured: ground-truth MPC return {gt} does not beat random return {rand}")]
    Misconfigured { gt: f64, rand: f64 },
}

fn fail<E: fmt::Display>(module: &'static str, iteration: usize) -> impl FnOnce(E) -> RunError {
    move |e| RunError::Failed { module, iteration, message: e.to_string() }
}

/// Returns and visited states of a set of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub returns: Vec<f64>,
    pub states: Vec<Vec<Vec<f64>>>,
    pub actions: Vec<Vec<Vec<f64>>>,
}

impl EpisodeBatch {
    pub fn mean(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len() as f64
    }

    /// Standard error of the mean; zero for a single episode.
    pub fn standard_error(&self) -> f64 {
        let n = self.returns.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let var = self.returns.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    }
}

/// Seed-fixed evaluation start states.
pub fn eval_starts(env: &EnvSpec, seed: u64, episodes: usize) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(derive_seed(seed, &[TAG_EVAL_STARTS]));
    (0..episodes).map(|_| env.sample_start(&mut rng)).collect()
}

/// Runs MPC planned against `dynamics` on the ground-truth environment, one
/// episode per start state, with a fresh controller per episode.
pub fn run_mpc_episodes(
    dynamics: &(dyn Fn(&[f64], &[f64], &mut [f64]) + Sync),
    env: &EnvSpec,
    spec: &PlanSpec,
    starts: &[Vec<f64>],
    seed: u64,
) -> Result<EpisodeBatch, barl_core::PlanError> {
    let reward = |s: &[f64], a: &[f64], n: &[f64]| env.reward(s, a, n);
    let mut returns = Vec::with_capacity(starts.len());
    let mut states = Vec::with_capacity(starts.len());
    let mut actions = Vec::with_capacity(starts.len());
    for (ep, s0) in starts.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, &[TAG_EVAL_PLAN, ep as u64]));
        let mut ctl = MpcController::new(spec.clone())?;
        let mut s = s0.clone();
        let mut visited = vec![s.clone()];
        let mut taken = Vec::with_capacity(env.horizon);
        let mut total = 0.0;
        for _ in 0..env.horizon {
            let a = ctl.act(&s, dynamics, &reward, &mut rng)?;
            let next = env.step(&s, &a).expect("planner emits in-bounds actions");
            total += env.reward(&s, &a, &next);
            s = next;
            visited.push(s.clone());
            taken.push(a);
        }
        returns.push(total);
        states.push(visited);
        actions.push(taken);
    }
    Ok(EpisodeBatch { returns, states, actions })
}

/// Posterior-mean dynamics projected into the state space.
pub fn mean_dynamics<'a>(model: &'a GpModel, env: &'a EnvSpec) -> impl Fn(&[f64], &[f64], &mut [f64]) + Sync + 'a {
    move |s, a, out| {
        let mut x = [0.0; 16];
        let d = s.len();
        x[..d].copy_from_slice(s);
        x[d..d + a.len()].copy_from_slice(a);
        model.mean_into(&x[..d + a.len()], out);
        env.normalize_state(out);
    }
}

/// Executes the posterior-mean MPC policy on the real environment.
pub fn evaluate_policy(
    model: &GpModel,
    env: &EnvSpec,
    spec: &PlanSpec,
    episodes: usize,
    seed: u64,
) -> Result<EpisodeBatch, barl_core::PlanError> {
    let dynamics = mean_dynamics(model, env);
    run_mpc_episodes(&dynamics, env, spec, &eval_starts(env, seed, episodes), seed)
}

/// Uniform-random actions from the same start states.
pub fn random_policy_episodes(env: &EnvSpec, episodes: usize, seed: u64) -> EpisodeBatch {
    let mut returns = Vec::new();
    let mut states = Vec::new();
    let mut actions = Vec::new();
    for (ep, s0) in eval_starts(env, seed, episodes).into_iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(seed, &[TAG_RANDOM_POLICY, ep as u64]));
        let mut s = s0;
        let mut visited = vec![s.clone()];
        let mut taken = Vec::with_capacity(env.horizon);
        let mut total = 0.0;
        for _ in 0..env.horizon {
            let a = env.sample_action(&mut rng);
            let next = env.step(&s, &a).expect("valid action");
            total += env.reward(&s, &a, &next);
            s = next;
            visited.push(s.clone());
            taken.push(a);
        }
        returns.push(total);
        states.push(visited);
        actions.push(taken);
    }
    EpisodeBatch { returns, states, actions }
}

/// Ground-truth MPC and random-policy returns defining the solved band.
pub fn solved_threshold(env: &EnvSpec, spec: &PlanSpec, episodes: usize, seed: u64) -> Result<Threshold, RunError> {
    let gt = |s: &[f64], a: &[f64], out: &mut [f64]| env.step_into(s, a, out);
    let gt_return = run_mpc_episodes(&gt, env, spec, &eval_starts(env, seed, episodes), seed)
        .map_err(fail("icem_planner", 0))?
        .mean();
    let rand_return = random_policy_episodes(env, episodes, seed).mean();
    Threshold::new(gt_return, rand_return)
}

/// Hyperparameter search box derived from the query box.
pub fn fit_options(env: &EnvSpec, restarts: usize) -> FitOptions {
    let widths: Vec<f64> = env
        .state_low
        .iter()
        .chain(&env.action_low)
        .zip(env.state_high.iter().chain(&env.action_high))
        .map(|(l, h)| h - l)
        .collect();
    FitOptions {
        restarts,
        length_bounds: Some(widths.iter().map(|w| (0.01 * w, 10.0 * w)).collect()),
        length_fallback: Some(widths.iter().map(|w| 0.25 * w).collect()),
        ..FitOptions::default()
    }
}

pub fn training_set(env: &EnvSpec, data: &Dataset) -> TrainingSet {
    TrainingSet::from_dataset_with(data, |s, sn, out| env.state_delta(s, sn, out))
}

struct Clock<'a> {
    timings: &'a mut Vec<TimingRecord>,
}

impl Clock<'_> {
    fn time<T>(&mut self, iteration: usize, phase: Phase, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(TimingRecord { iteration, phase, seconds: start.elapsed().as_secs_f64() });
        out
    }
}

/// Refits on the initial data and every `refit_period` new points after.
struct ParamSchedule {
    params: Option<KernelParams>,
    fitted_at: usize,
}

impl ParamSchedule {
    fn current(&mut self, config: &RunConfig, env: &EnvSpec, data: &TrainingSet, iteration: usize) -> Result<&KernelParams, RunError> {
        let due = self.params.is_none() || data.len() >= self.fitted_at + config.refit_period;
        if due {
            let mut rng = rng_from_seed(derive_seed(config.seed, &[TAG_FIT, iteration as u64]));
            let p = fit_hyperparams(data, &fit_options(env, config.fit_restarts), &mut rng)
                .map_err(fail("dynamics_gp", iteration))?;
            self.params = Some(p);
            self.fitted_at = data.len();
        }
        Ok(self.params.as_ref().expect("set above"))
    }
}

struct Run<'c, X: Executor> {
    config: &'c RunConfig,
    env: EnvSpec,
    exec: &'c X,
    data: Dataset,
    log: RunLog,
    schedule: ParamSchedule,
}

impl<X: Executor> Run<'_, X> {
    fn query(&mut self, iteration: usize, x: Vec<f64>, acq_value: f64) -> Result<(), RunError> {
        let d = self.env.state_dim;
        let env = &self.env;
        let next = Clock { timings: &mut self.log.timings }
            .time(iteration, Phase::Query, || env.step(&x[..d], &x[d..]))
            .map_err(fail("envs", iteration))?;
        self.data
            .push(Transition::new(x[..d].to_vec(), x[d..].to_vec(), next.clone()))
            .map_err(fail("dynamics_gp", iteration))?;
        self.log.queries.push(QueryRecord { iteration, input: x, next_state: next, acq_value });
        Ok(())
    }

    fn model(&mut self, iteration: usize) -> Result<GpModel, RunError> {
        let training = training_set(&self.env, &self.data);
        let start = Instant::now();
        let params = self.schedule.current(self.config, &self.env, &training, iteration)?.clone();
        let model = GpModel::new(params, training).map_err(fail("dynamics_gp", iteration))?;
        self.log.timings.push(TimingRecord { iteration, phase: Phase::Fit, seconds: start.elapsed().as_secs_f64() });
        Ok(model)
    }

    /// Evaluates with the current parameters on all data; returns whether solved.
    fn evaluate(&mut self, iteration: usize) -> Result<bool, RunError> {
        let model = self.model(iteration)?;
        let (env, cfg) = (&self.env, self.config);
        let batch = Clock { timings: &mut self.log.timings }
            .time(iteration, Phase::Eval, || evaluate_policy(&model, env, &cfg.eval_plan, cfg.eval_episodes, cfg.seed))
            .map_err(fail("icem_planner", iteration))?;
        let rec = EvalRecord { iteration, n_queries: self.data.len(), mean: batch.mean(), se: batch.standard_error() };
        let solved = self.log.threshold.is_solved(rec.mean);
        self.log.evals.push(rec);
        self.log.final_eval_states = batch.states;
        self.log.final_eval_actions = batch.actions;
        self.log.final_params = Some(model.params().clone());
        Ok(solved)
    }
}

/// Runs one seeded experiment with the configured strategy.
pub fn run<X: Executor>(config: &RunConfig, exec: &X) -> Result<RunLog, RunError> {
    config.validate().map_err(|e| RunError::Config(e.0))?;
    let env = config.env_spec();
    let threshold = solved_threshold(&env, &config.eval_plan, config.eval_episodes, config.seed)?;
    let mut run = Run {
        config,
        exec,
        data: Dataset::new(env.state_dim, env.action_dim),
        log: RunLog {
            config: config.clone(),
            queries: Vec::new(),
            evals: Vec::new(),
            timings: Vec::new(),
            threshold,
            final_eval_states: Vec::new(),
            final_eval_actions: Vec::new(),
            final_params: None,
        },
        schedule: ParamSchedule { params: None, fitted_at: 0 },
        env,
    };
    let mut init = rng_from_seed(derive_seed(config.seed, &[TAG_INIT]));
    let x0 = run.env.sample_query(&mut init);
    run.query(0, x0, f64::NAN)?;
    let solved = run.evaluate(0)?;
    if !(solved && config.stop_when_solved) {
        match config.strategy {
            Strategy::RolloutMpc => collect_episodes(&mut run)?,
            _ => acquire(&mut run)?,
        }
    }
    Ok(run.log)
}

fn acquire<X: Executor>(run: &mut Run<'_, X>) -> Result<(), RunError> {
    let cfg = run.config;
    for i in 1..=cfg.budget {
        let mut rng = iteration_rng(cfg.seed, i);
        let (x, value) = match cfg.strategy {
            Strategy::Random => (run.env.sample_query(&mut rng), f64::NAN),
            Strategy::EigT => {
                let model = run.model(i)?;
                let candidates: Vec<Vec<f64>> = (0..cfg.candidates).map(|_| run.env.sample_query(&mut rng)).collect();
                let exec = run.exec;
                let scores = Clock { timings: &mut run.log.timings }
                    .time(i, Phase::Score, || score_eig_t(&model, &candidates, exec))
                    .map_err(fail("acquisition", i))?;
                pick(scores, i)?
            }
            Strategy::Barl => {
                let model = run.model(i)?;
                let (env, exec) = (&run.env, run.exec);
                let s0 = env.sample_start(&mut rng);
                let base = rng.next_u64();
                let candidates: Vec<Vec<f64>> = (0..cfg.candidates).map(|_| env.sample_query(&mut rng)).collect();
                let mut clock = Clock { timings: &mut run.log.timings };
                let paths = clock
                    .time(i, Phase::SamplePaths, || sample_paths(&model, cfg.path_samples, base, exec))
                    .map_err(fail("posterior_paths", i))?;
                let trajectories = clock
                    .time(i, Phase::RolloutTau, || rollout_paths(&paths, env, &cfg.rollout_plan, &s0, base, exec))
                    .map_err(fail("icem_planner", i))?;
                let scores = clock
                    .time(i, Phase::Score, || {
                        EigTauStar::new(&model, &trajectories, exec).and_then(|acq| Ok(acq.score_all(&candidates, exec)?))
                    })
                    .map_err(fail("acquisition", i))?;
                pick(scores, i)?
            }
            Strategy::RolloutMpc => unreachable!("handled by collect_episodes"),
        };
        run.query(i, x, value)?;
        if i % cfg.eval_period == 0 || i == cfg.budget {
            let solved = run.evaluate(i)?;
            if solved && cfg.stop_when_solved {
                break;
            }
        }
    }
    Ok(())
}

/// Random stream of acquisition iteration `i`.
pub fn iteration_rng(seed: u64, i: usize) -> barl_core::Rng64 {
    rng_from_seed(derive_seed(seed, &[TAG_ITER, i as u64]))
}

fn pick(scores: Vec<barl_core::AcqScore>, iteration: usize) -> Result<(Vec<f64>, f64), RunError> {
    let best = choose_query(&scores).map_err(fail("acquisition", iteration))?;
    let s = scores.into_iter().nth(best).expect("index from choose_query");
    Ok((s.candidate, s.value))
}

/// Rollout baseline: executes the posterior-mean policy on the real system
/// from `s_0 ~ p_0` and keeps every transition, refitting between episodes.
fn collect_episodes<X: Executor>(run: &mut Run<'_, X>) -> Result<(), RunError> {
    let cfg = run.config;
    let mut count = 0;
    let mut episode = 0u64;
    while count < cfg.budget {
        let model = run.model(count + 1)?;
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[TAG_EPISODE, episode]));
        let mut s = run.env.sample_start(&mut rng);
        let mut ctl = MpcController::new(cfg.eval_plan.clone()).map_err(fail("icem_planner", count + 1))?;
        let env = run.env.clone();
        let dynamics = mean_dynamics(&model, &env);
        let reward = |s: &[f64], a: &[f64], n: &[f64]| env.reward(s, a, n);
        for _ in 0..env.horizon {
            if count == cfg.budget {
                break;
            }
            count += 1;
            let a = ctl.act(&s, &dynamics, &reward, &mut rng).map_err(fail("icem_planner", count))?;
            let mut x = s.clone();
            x.extend_from_slice(&a);
            run.query(count, x, f64::NAN)?;
            s = run.data.transitions().last().expect("just pushed").next_state.clone();
        }
        episode += 1;
        let solved = run.evaluate(count)?;
        if solved && cfg.stop_when_solved {
            break;
        }
    }
    Ok(())
}
