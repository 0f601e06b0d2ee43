//! Ground-truth control environments.
//!
//! Each environment is a stateless transition oracle: `step` maps any
//! `(s, a)` to the next state, so queries can be made in any order.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::EnvError;
use crate::planner::PlanSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvKind {
    Pendulum,
    Cartpole,
    LavaPath,
}

impl EnvKind {
    pub const ALL: [EnvKind; 3] = [EnvKind::Pendulum, EnvKind::Cartpole, EnvKind::LavaPath];

    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Pendulum => "pendulum",
            EnvKind::Cartpole => "cartpole",
            EnvKind::LavaPath => "lavapath",
        }
    }
}

/// Wraps an angle into `[-π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    theta - two_pi * libm::floor((theta + PI) / two_pi)
}

mod pendulum {
    pub const G: f64 = 10.0;
    pub const M: f64 = 1.0;
    pub const L: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;
}

mod cartpole {
    pub const G: f64 = 9.8;
    pub const CART_MASS: f64 = 1.0;
    pub const POLE_MASS: f64 = 0.1;
    /// Half the pole length.
    pub const L: f64 = 0.5;
    pub const DT: f64 = 0.04;
    pub const MAX_FORCE: f64 = 10.0;
    pub const TIP_THRESHOLD: f64 = 0.4;
    pub const TIP_SHARPNESS: f64 = 8.0;
}

pub mod lava {
    pub const DT: f64 = 0.1;
    pub const GOAL: [f64; 2] = [0.9, 0.5];
    pub const PENALTY: f64 = 500.0;
    /// `[x_lo, x_hi, y_lo, y_hi]`, closed.
    pub const POOLS: [[f64; 4]; 2] = [[0.3, 0.7, 0.0, 0.45], [0.3, 0.7, 0.55, 1.0]];
}

/// Dimensions, bounds, start distribution and dynamics of one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub dt: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// State part of the query box.
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    /// `p_0` is uniform on this box.
    pub start_low: Vec<f64>,
    pub start_high: Vec<f64>,
    /// State coordinates that are angles.
    pub angular: Vec<bool>,
}

impl EnvSpec {
    pub fn pendulum() -> Self {
        use pendulum::*;
        Self {
            kind: EnvKind::Pendulum,
            state_dim: 2,
            action_dim: 1,
            horizon: 200,
            dt: DT,
            action_low: vec![-MAX_TORQUE],
            action_high: vec![MAX_TORQUE],
            state_low: vec![-PI, -MAX_SPEED],
            state_high: vec![PI, MAX_SPEED],
            start_low: vec![-PI, -1.0],
            start_high: vec![PI, 1.0],
            angular: vec![true, false],
        }
    }

    pub fn cartpole() -> Self {
        use cartpole::*;
        Self {
            kind: EnvKind::Cartpole,
            state_dim: 4,
            action_dim: 1,
            horizon: 100,
            dt: DT,
            action_low: vec![-MAX_FORCE],
            action_high: vec![MAX_FORCE],
            state_low: vec![-3.0, -6.0, -PI, -10.0],
            state_high: vec![3.0, 6.0, PI, 10.0],
            start_low: vec![-0.05, -0.05, PI - 0.05, -0.05],
            start_high: vec![0.05, 0.05, PI + 0.05, 0.05],
            angular: vec![false, false, true, false],
        }
    }

    pub fn lava_path() -> Self {
        Self {
            kind: EnvKind::LavaPath,
            state_dim: 4,
            action_dim: 2,
            horizon: 50,
            dt: lava::DT,
            action_low: vec![-1.0, -1.0],
            action_high: vec![1.0, 1.0],
            state_low: vec![0.0, 0.0, -1.0, -1.0],
            state_high: vec![1.0, 1.0, 1.0, 1.0],
            start_low: vec![0.05, 0.45, 0.0, 0.0],
            start_high: vec![0.15, 0.55, 0.0, 0.0],
            angular: vec![false; 4],
        }
    }

    pub fn from_kind(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Pendulum => Self::pendulum(),
            EnvKind::Cartpole => Self::cartpole(),
            EnvKind::LavaPath => Self::lava_path(),
        }
    }

    /// `"pendulum" | "cartpole" | "lavapath"`.
    pub fn by_name(name: &str) -> Result<Self, EnvError> {
        EnvKind::ALL
            .iter()
            .find(|k| k.name() == name)
            .map(|&k| Self::from_kind(k))
            .ok_or_else(|| EnvError::Unknown(name.to_string()))
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + self.action_dim
    }

    /// Per-environment iCEM budget used for evaluation and posterior rollouts.
    pub fn default_plan_spec(&self) -> PlanSpec {
        let (n, e, h, iters, replan) = match self.kind {
            EnvKind::Pendulum => (25, 3, 20, 3, 6),
            EnvKind::Cartpole => (30, 6, 15, 5, 1),
            EnvKind::LavaPath => (25, 4, 20, 3, 6),
        };
        PlanSpec::new(n, e, h, iters, replan, self.action_low.clone(), self.action_high.clone())
    }

    fn check(&self, s: &[f64], a: &[f64]) -> Result<(), EnvError> {
        if s.len() != self.state_dim {
            return Err(EnvError::DimensionMismatch { expected: self.state_dim, got: s.len() });
        }
        if a.len() != self.action_dim {
            return Err(EnvError::DimensionMismatch { expected: self.action_dim, got: a.len() });
        }
        if s.iter().chain(a).any(|v| !v.is_finite()) {
            return Err(EnvError::NonFinite);
        }
        Ok(())
    }

    /// Ground-truth transition.
    pub fn step(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>, EnvError> {
        self.check(s, a)?;
        let mut out = vec![0.0; self.state_dim];
        self.step_into(s, a, &mut out);
        Ok(out)
    }

    /// Unchecked [`step`](Self::step) writing into `out`.
    pub fn step_into(&self, s: &[f64], a: &[f64], out: &mut [f64]) {
        match self.kind {
            EnvKind::Pendulum => {
                use pendulum::*;
                let u = a[0].clamp(-MAX_TORQUE, MAX_TORQUE);
                let acc = 3.0 * G / (2.0 * L) * libm::sin(s[0]) + 3.0 / (M * L * L) * u;
                let thd = (s[1] + acc * DT).clamp(-MAX_SPEED, MAX_SPEED);
                out[0] = wrap_angle(s[0] + thd * DT);
                out[1] = thd;
            }
            EnvKind::Cartpole => {
                use cartpole::*;
                let f = a[0].clamp(-MAX_FORCE, MAX_FORCE);
                let (x, xd, th, thd) = (s[0], s[1], s[2], s[3]);
                let (sin, cos) = (libm::sin(th), libm::cos(th));
                let total = CART_MASS + POLE_MASS;
                let tmp = (f + POLE_MASS * L * thd * thd * sin) / total;
                let th_acc = (G * sin - cos * tmp) / (L * (4.0 / 3.0 - POLE_MASS * cos * cos / total));
                let x_acc = tmp - POLE_MASS * L * th_acc * cos / total;
                out[0] = x + DT * xd;
                out[1] = xd + DT * x_acc;
                out[2] = th + DT * thd;
                out[3] = thd + DT * th_acc;
                self.normalize_state(out);
            }
            EnvKind::LavaPath => {
                use lava::DT;
                for k in 0..2 {
                    let acc = a[k].clamp(-1.0, 1.0);
                    let v = (s[2 + k] + acc * DT).clamp(-1.0, 1.0);
                    out[2 + k] = v;
                    out[k] = (s[k] + v * DT).clamp(0.0, 1.0);
                }
            }
        }
    }

    /// Known reward `r(s, a, s')`; at most zero.
    pub fn reward(&self, s: &[f64], a: &[f64], next: &[f64]) -> f64 {
        match self.kind {
            EnvKind::Pendulum => {
                let th = wrap_angle(s[0]);
                -(th * th + 0.1 * s[1] * s[1] + 0.001 * a[0] * a[0])
            }
            EnvKind::Cartpole => {
                use cartpole::*;
                let tip_x = next[0] + 2.0 * L * libm::sin(next[2]);
                let tip_y = 2.0 * L * libm::cos(next[2]);
                let dist = libm::sqrt(tip_x * tip_x + (tip_y - 2.0 * L) * (tip_y - 2.0 * L));
                -1.0 / (1.0 + libm::exp(-TIP_SHARPNESS * (dist - TIP_THRESHOLD)))
            }
            EnvKind::LavaPath => {
                let dx = next[0] - lava::GOAL[0];
                let dy = next[1] - lava::GOAL[1];
                let penalty = if in_lava(next[0], next[1]) { lava::PENALTY } else { 0.0 };
                -(dx * dx + dy * dy) - penalty
            }
        }
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        sample_box(&self.start_low, &self.start_high, rng)
    }

    /// A uniform `(s, a)` input from the query box.
    pub fn sample_query<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = sample_box(&self.state_low, &self.state_high, rng);
        x.extend(sample_box(&self.action_low, &self.action_high, rng));
        x
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        sample_box(&self.action_low, &self.action_high, rng)
    }

    /// Projects a (model-predicted) state back into the state space: angles
    /// wrapped, everything else clipped to the query box.
    pub fn normalize_state(&self, s: &mut [f64]) {
        for (k, v) in s.iter_mut().enumerate() {
            *v = if self.angular[k] { wrap_angle(*v) } else { v.clamp(self.state_low[k], self.state_high[k]) };
        }
    }

    /// `s' - s`, with angular differences wrapped.
    pub fn state_delta(&self, s: &[f64], next: &[f64], out: &mut [f64]) {
        for k in 0..self.state_dim {
            let d = next[k] - s[k];
            out[k] = if self.angular[k] { wrap_angle(d) } else { d };
        }
    }

    pub fn query_box_contains(&self, x: &[f64]) -> bool {
        let lo = self.state_low.iter().chain(&self.action_low);
        let hi = self.state_high.iter().chain(&self.action_high);
        x.iter().zip(lo.zip(hi)).all(|(v, (l, h))| *v >= *l && *v <= *h)
    }
}

/// Whether a lava-path position lies in a lava pool.
pub fn in_lava(x: f64, y: f64) -> bool {
    lava::POOLS.iter().any(|p| x >= p[0] && x <= p[1] && y >= p[2] && y <= p[3])
}

/// Whether a lava-path position lies in the corridor between the pools.
pub fn in_gap_corridor(x: f64, y: f64) -> bool {
    (0.3..=0.7).contains(&x) && y > 0.45 && y < 0.55
}

fn sample_box<R: Rng + ?Sized>(lo: &[f64], hi: &[f64], rng: &mut R) -> Vec<f64> {
    lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
}
