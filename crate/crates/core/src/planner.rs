//! Receding-horizon planning with the improved cross-entropy method (iCEM):
//! colored-noise sampling, a decaying population and elite caching.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::PlanError;
use crate::noise::colored_noise;

/// Optimizer budget and action bounds for one planning problem.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanSpec {
    pub base_samples: usize,
    pub elites: usize,
    pub horizon: usize,
    pub iterations: usize,
    pub replan_period: usize,
    /// Exponent of the `1/f^beta` action-noise spectrum.
    pub beta: f64,
    /// Population decay per round.
    pub gamma: f64,
    /// Fraction of elites carried into the next round.
    pub xi: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

pub const DEFAULT_BETA: f64 = 3.0;
pub const DEFAULT_GAMMA: f64 = 1.25;
pub const DEFAULT_XI: f64 = 0.3;

impl PlanSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        base_samples: usize,
        elites: usize,
        horizon: usize,
        iterations: usize,
        replan_period: usize,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
    ) -> Self {
        Self {
            base_samples,
            elites,
            horizon,
            iterations,
            replan_period,
            beta: DEFAULT_BETA,
            gamma: DEFAULT_GAMMA,
            xi: DEFAULT_XI,
            action_low,
            action_high,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.elites == 0 || 2 * self.elites > self.base_samples {
            return Err(PlanError::InvalidSpec("need 1 <= elites and 2*elites <= base_samples"));
        }
        if self.horizon == 0 || self.replan_period == 0 || self.replan_period > self.horizon {
            return Err(PlanError::InvalidSpec("need 1 <= replan_period <= horizon"));
        }
        if self.iterations == 0 {
            return Err(PlanError::InvalidSpec("iterations must be positive"));
        }
        if !(self.beta >= 0.0) || !(self.gamma >= 1.0) || !(0.0..=1.0).contains(&self.xi) {
            return Err(PlanError::InvalidSpec("need beta >= 0, gamma >= 1, xi in [0, 1]"));
        }
        if self.action_low.is_empty()
            || self.action_low.len() != self.action_high.len()
            || self.action_low.iter().zip(&self.action_high).any(|(l, h)| !(l < h))
        {
            return Err(PlanError::InvalidSpec("action bounds must be nonempty with low < high"));
        }
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    /// Sequences sampled in round `round`: `max(⌈N·γ^-i⌉, 2E)`.
    pub fn population(&self, round: usize) -> usize {
        let decayed = libm::ceil(self.base_samples as f64 * libm::pow(self.gamma, -(round as f64)) - 1e-9) as usize;
        decayed.max(2 * self.elites)
    }

    /// Elites carried into the next round: `⌈ξ·E⌉`.
    pub fn cached_elites(&self) -> usize {
        (libm::ceil(self.xi * self.elites as f64 - 1e-9) as usize).min(self.elites)
    }

    fn clip(&self, seq: &mut [f64]) {
        let na = self.action_dim();
        for (k, v) in seq.iter_mut().enumerate() {
            *v = v.clamp(self.action_low[k % na], self.action_high[k % na]);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    pub population: usize,
    /// Best return seen up to and including this round.
    pub best_return: f64,
}

/// Result of one planning call; sequences are row-major `horizon × n_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub actions: Vec<f64>,
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
    pub predicted_return: f64,
    pub rounds: Vec<RoundStats>,
}

impl Plan {
    pub fn action(&self, t: usize, n_a: usize) -> &[f64] {
        &self.actions[t * n_a..(t + 1) * n_a]
    }
}

/// Sum of rewards of `actions` rolled out from `s0` under `dynamics`.
pub fn rollout_return<D, R>(dynamics: &D, reward: &R, s0: &[f64], actions: &[f64], n_a: usize) -> f64
where
    D: Fn(&[f64], &[f64], &mut [f64]) + ?Sized,
    R: Fn(&[f64], &[f64], &[f64]) -> f64 + ?Sized,
{
    let mut s = s0.to_vec();
    let mut next = vec![0.0; s0.len()];
    let mut total = 0.0;
    for a in actions.chunks_exact(n_a) {
        dynamics(&s, a, &mut next);
        total += reward(&s, a, &next);
        core::mem::swap(&mut s, &mut next);
    }
    total
}

/// Plans an action sequence from `s0` that maximizes the summed reward under
/// `dynamics`, returning the best sequence seen over all rounds.
pub fn icem_plan<D, R, G>(
    dynamics: &D,
    reward: &R,
    s0: &[f64],
    spec: &PlanSpec,
    warm_start: Option<&Plan>,
    rng: &mut G,
) -> Result<Plan, PlanError>
where
    D: Fn(&[f64], &[f64], &mut [f64]) + ?Sized,
    R: Fn(&[f64], &[f64], &[f64]) -> f64 + ?Sized,
    G: Rng + ?Sized,
{
    spec.validate()?;
    let (h, na) = (spec.horizon, spec.action_dim());
    let len = h * na;
    let mid: Vec<f64> = (0..len).map(|k| 0.5 * (spec.action_low[k % na] + spec.action_high[k % na])).collect();
    let init_std: Vec<f64> = (0..len).map(|k| 0.25 * (spec.action_high[k % na] - spec.action_low[k % na])).collect();
    let floor: Vec<f64> = (0..len).map(|k| 1e-3 * (spec.action_high[k % na] - spec.action_low[k % na])).collect();

    let mut mean = match warm_start {
        Some(prev) if prev.mean.len() == len => {
            let shift = spec.replan_period * na;
            let mut m = mid.clone();
            m[..len - shift].copy_from_slice(&prev.mean[shift..]);
            m
        }
        _ => mid,
    };
    let mut std = init_std;
    let mut cache: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut rounds = Vec::with_capacity(spec.iterations);

    for round in 0..spec.iterations {
        let pop = spec.population(round);
        let noise = colored_noise(spec.beta, h, na, pop, rng);
        let mut candidates: Vec<Vec<f64>> = noise
            .chunks_exact(len)
            .map(|z| {
                let mut seq: Vec<f64> = (0..len).map(|k| mean[k] + std[k] * z[k]).collect();
                spec.clip(&mut seq);
                seq
            })
            .collect();
        candidates.append(&mut cache);
        if round + 1 == spec.iterations {
            let mut m = mean.clone();
            spec.clip(&mut m);
            candidates.push(m);
        }
        let returns: Vec<f64> = candidates.iter().map(|seq| rollout_return(dynamics, reward, s0, seq, na)).collect();
        if let Some(k) = returns.iter().position(|r| !r.is_finite()) {
            return Err(PlanError::NonFinite { actions: candidates.swap_remove(k) });
        }
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        // stable: equal returns keep index order
        order.sort_by(|&a, &b| returns[b].partial_cmp(&returns[a]).unwrap_or(core::cmp::Ordering::Equal));
        let top = order[0];
        if best.as_ref().is_none_or(|(_, r)| returns[top] > *r) {
            best = Some((candidates[top].clone(), returns[top]));
        }
        rounds.push(RoundStats { population: pop, best_return: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1) });

        let elites = &order[..spec.elites.min(order.len())];
        let e = elites.len() as f64;
        for k in 0..len {
            let m = elites.iter().map(|&i| candidates[i][k]).sum::<f64>() / e;
            let v = elites.iter().map(|&i| (candidates[i][k] - m) * (candidates[i][k] - m)).sum::<f64>() / e;
            mean[k] = m;
            std[k] = libm::sqrt(v).max(floor[k]);
        }
        cache = elites[..spec.cached_elites()].iter().map(|&i| candidates[i].clone()).collect();
    }

    let (actions, predicted_return) = best.expect("at least one round");
    Ok(Plan { actions, mean, stddev: std, predicted_return, rounds })
}

/// Receding-horizon controller state: the active plan and the steps taken
/// since it was made.
#[derive(Debug, Clone)]
pub struct MpcController {
    spec: PlanSpec,
    plan: Option<Plan>,
    step: usize,
    plan_calls: usize,
}

impl MpcController {
    pub fn new(spec: PlanSpec) -> Result<Self, PlanError> {
        spec.validate()?;
        Ok(Self { spec, plan: None, step: 0, plan_calls: 0 })
    }

    pub fn spec(&self) -> &PlanSpec {
        &self.spec
    }

    pub fn reset(&mut self) {
        self.plan = None;
        self.step = 0;
    }

    /// Number of `icem_plan` invocations so far.
    pub fn plan_calls(&self) -> usize {
        self.plan_calls
    }

    /// Next action at `s`, replanning every `replan_period` steps with a warm
    /// start from the previous plan.
    pub fn act<D, R, G>(&mut self, s: &[f64], dynamics: &D, reward: &R, rng: &mut G) -> Result<Vec<f64>, PlanError>
    where
        D: Fn(&[f64], &[f64], &mut [f64]) + ?Sized,
        R: Fn(&[f64], &[f64], &[f64]) -> f64 + ?Sized,
        G: Rng + ?Sized,
    {
        if self.plan.is_none() || self.step >= self.spec.replan_period {
            let plan = icem_plan(dynamics, reward, s, &self.spec, self.plan.as_ref(), rng)?;
            self.plan = Some(plan);
            self.step = 0;
            self.plan_calls += 1;
        }
        let na = self.spec.action_dim();
        let plan = self.plan.as_ref().expect("plan set above");
        let a = plan.action(self.step, na).to_vec();
        self.step += 1;
        Ok(a)
    }
}
