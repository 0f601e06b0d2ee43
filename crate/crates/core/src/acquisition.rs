//! Acquisition functions for transition queries.
//!
//! `EIG_τ*` scores a candidate `(s, a)` by how much observing `s'` there is
//! expected to reduce uncertainty about the optimal trajectory: the predictive
//! entropy now, minus the average entropy after conditioning on each sampled
//! optimal trajectory as noise-free data.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};

use rand::{Rng, RngCore};

use crate::envs::EnvSpec;
use crate::error::{AcqError, GpError};
use crate::exec::Executor;
use crate::gp::{Conditioned, GpModel};
use crate::paths::{sample_path, PosteriorPath};
use crate::planner::{MpcController, PlanSpec};
use crate::seed::{derive_seed, rng_from_seed};

/// One sampled optimal trajectory `τ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `H + 1` states; `states[0]` is the start state.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    /// `(s_t, a_t)` for `t < H`; the conditioning inputs.
    pub inputs: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcqScore {
    pub candidate: Vec<f64>,
    pub value: f64,
}

/// Upper bound on `state_dim + action_dim` for stack buffers.
const MAX_INPUT: usize = 16;

/// Executes the MPC policy planned on `path` against `path` itself for
/// `steps` steps. States are projected into the environment's state space
/// after every model step.
pub fn rollout_on_path<R: Rng + ?Sized>(
    path: &PosteriorPath<'_>,
    env: &EnvSpec,
    spec: &PlanSpec,
    s0: &[f64],
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory, AcqError> {
    let d = env.state_dim;
    if path.model().input_dim() != env.input_dim() || s0.len() != d {
        return Err(GpError::DimensionMismatch { expected: env.input_dim(), got: path.model().input_dim() }.into());
    }
    let dynamics = |s: &[f64], a: &[f64], out: &mut [f64]| {
        let mut x = [0.0; MAX_INPUT];
        x[..d].copy_from_slice(s);
        x[d..d + a.len()].copy_from_slice(a);
        path.eval_input_into(&x[..d + a.len()], out);
        env.normalize_state(out);
    };
    let reward = |s: &[f64], a: &[f64], n: &[f64]| env.reward(s, a, n);
    let mut ctl = MpcController::new(spec.clone())?;
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    let mut inputs = Vec::with_capacity(steps);
    states.push(s0.to_vec());
    for t in 0..steps {
        let s = &states[t];
        let a = ctl.act(s, &dynamics, &reward, rng)?;
        let mut next = vec![0.0; d];
        dynamics(s, &a, &mut next);
        let mut x = s.clone();
        x.extend_from_slice(&a);
        inputs.push(x);
        actions.push(a);
        states.push(next);
    }
    Ok(Trajectory { states, actions, inputs })
}

/// Samples `n` posterior paths; path `ℓ` uses stream `(base, ℓ, 0)`.
pub fn sample_paths<'m, X: Executor>(
    model: &'m GpModel,
    n: usize,
    base: u64,
    exec: &X,
) -> Result<Vec<PosteriorPath<'m>>, GpError> {
    exec.map_indexed(n, |l| sample_path(model, &mut rng_from_seed(derive_seed(base, &[l as u64, 0]))))
        .into_iter()
        .collect()
}

/// Rolls out the MPC policy of every path on that path from `s0` for the
/// environment horizon; path `ℓ` plans with stream `(base, ℓ, 1)`.
pub fn rollout_paths<X: Executor>(
    paths: &[PosteriorPath<'_>],
    env: &EnvSpec,
    spec: &PlanSpec,
    s0: &[f64],
    base: u64,
    exec: &X,
) -> Result<Vec<Trajectory>, AcqError> {
    exec.map_indexed(paths.len(), |l| {
        let mut r = rng_from_seed(derive_seed(base, &[l as u64, 1]));
        rollout_on_path(&paths[l], env, spec, s0, env.horizon, &mut r)
    })
    .into_iter()
    .collect()
}

/// Draws one start state and `n` posterior paths, and rolls out the MPC
/// policy of each path on that path for the environment horizon.
///
/// Per-path streams derive from a single draw of `rng` and the path index,
/// so the result does not depend on how `exec` schedules the work.
pub fn sample_optimal_trajectories<R, X>(
    model: &GpModel,
    env: &EnvSpec,
    spec: &PlanSpec,
    n: usize,
    rng: &mut R,
    exec: &X,
) -> Result<Vec<Trajectory>, AcqError>
where
    R: RngCore + ?Sized,
    X: Executor,
{
    if n == 0 {
        return Err(AcqError::Empty("need at least one posterior sample"));
    }
    let s0 = env.sample_start(rng);
    let base = rng.next_u64();
    let paths = sample_paths(model, n, base, exec)?;
    rollout_paths(&paths, env, spec, &s0, base, exec)
}

fn entropy_floored(variance: &[f64], noise: &[f64], floor: &[f64]) -> f64 {
    let mut h = 0.0;
    for k in 0..variance.len() {
        h += 0.5 * libm::log(2.0 * PI * E * (variance[k].max(floor[k]) + noise[k]));
    }
    h
}

/// `EIG_τ*` prepared for a fixed model and set of sampled trajectories.
pub struct EigTauStar<'m> {
    model: &'m GpModel,
    conditioned: Vec<Conditioned<'m>>,
    noise: Vec<f64>,
    jitter: Vec<f64>,
}

impl<'m> EigTauStar<'m> {
    pub fn new<X: Executor>(model: &'m GpModel, trajectories: &[Trajectory], exec: &X) -> Result<Self, AcqError> {
        if trajectories.is_empty() {
            return Err(AcqError::Empty("need at least one trajectory"));
        }
        let conditioned = exec
            .map_indexed(trajectories.len(), |l| model.condition_on(&trajectories[l].inputs))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { model, conditioned, noise: model.noise_variances(), jitter: model.jitter() })
    }

    pub fn score(&self, candidate: &[f64]) -> Result<f64, GpError> {
        let q = self.model.query(candidate)?;
        let prior = entropy_floored(&q.variance, &self.noise, &self.jitter);
        let mut posterior = 0.0;
        for c in &self.conditioned {
            posterior += entropy_floored(&c.variance_at(&q), &self.noise, &self.jitter);
        }
        Ok(prior - posterior / self.conditioned.len() as f64)
    }

    pub fn score_all<X: Executor>(&self, candidates: &[Vec<f64>], exec: &X) -> Result<Vec<AcqScore>, GpError>
    where
        Self: Sync,
    {
        exec.map_indexed(candidates.len(), |i| {
            self.score(&candidates[i]).map(|value| AcqScore { candidate: candidates[i].clone(), value })
        })
        .into_iter()
        .collect()
    }
}

/// Monte-Carlo `EIG_τ*` of one candidate.
pub fn eig_tau_star(model: &GpModel, trajectories: &[Trajectory], candidate: &[f64]) -> Result<f64, AcqError> {
    Ok(EigTauStar::new(model, trajectories, &crate::exec::Sequential)?.score(candidate)?)
}

/// Predictive entropy of `s'` at the candidate (the `EIG_T` baseline).
pub fn eig_t(model: &GpModel, candidate: &[f64]) -> Result<f64, GpError> {
    let q = model.query(candidate)?;
    Ok(entropy_floored(&q.variance, &model.noise_variances(), &model.jitter()))
}

pub fn score_eig_t<X: Executor>(model: &GpModel, candidates: &[Vec<f64>], exec: &X) -> Result<Vec<AcqScore>, GpError> {
    exec.map_indexed(candidates.len(), |i| {
        eig_t(model, &candidates[i]).map(|value| AcqScore { candidate: candidates[i].clone(), value })
    })
    .into_iter()
    .collect()
}

/// Index of the highest-scoring candidate; ties go to the lowest index.
pub fn choose_query(scores: &[AcqScore]) -> Result<usize, AcqError> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if s.value.is_nan() {
            continue;
        }
        if best.is_none_or(|b| s.value > scores[b].value) {
            best = Some(i);
        }
    }
    if scores.is_empty() {
        return Err(AcqError::Empty("no candidates to choose from"));
    }
    Ok(best.unwrap_or(0))
}
