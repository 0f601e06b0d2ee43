//! Type-II maximum likelihood for the per-dimension kernel hyperparameters.
//!
//! Each output dimension is fit independently on standardized targets by
//! multi-restart BFGS over log-parameters squashed into a box.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use super::{se_kernel, DimParams, KernelParams, TrainingSet, NOISE_FLOOR};
use crate::error::GpError;
use crate::linalg::Cholesky;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Per-input `(low, high)` lengthscale bounds. Defaults to
    /// `[init/100, init·100]` around the starting lengthscales.
    pub length_bounds: Option<Vec<(f64, f64)>>,
    /// Lengthscales used when a coordinate has no spread in the data.
    pub length_fallback: Option<Vec<f64>>,
    /// Target standard deviation used when the data cannot provide one.
    pub target_scale_fallback: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 200,
            length_bounds: None,
            length_fallback: None,
            target_scale_fallback: 1.0,
        }
    }
}

/// Below this many points the likelihood is too flat to be worth optimizing.
const MIN_POINTS_TO_OPTIMIZE: usize = 3;
const SIGNAL_BOUNDS: (f64, f64) = (1e-3, 1e3);
const NOISE_RATIO_BOUNDS: (f64, f64) = (NOISE_FLOOR, 1.0);

/// Log marginal likelihood and its gradient with respect to
/// `[ln ℓ_1 .. ln ℓ_p, ln σ_f², ln σ_n²]`.
///
/// Returns `None` when the kernel matrix cannot be factorized.
pub fn log_marginal_likelihood(
    inputs: &[f64],
    input_dim: usize,
    targets: &[f64],
    noiseless: &[bool],
    log_params: &[f64],
) -> Option<(f64, Vec<f64>)> {
    let n = targets.len();
    let p = input_dim;
    let ls: Vec<f64> = log_params[..p].iter().map(|v| libm::exp(*v)).collect();
    let inv_sq: Vec<f64> = ls.iter().map(|l| 1.0 / (l * l)).collect();
    let sf2 = libm::exp(log_params[p]);
    let sn2 = libm::exp(log_params[p + 1]);
    let x = |i: usize| &inputs[i * p..(i + 1) * p];

    let mut kse = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = se_kernel(x(i), x(j), &inv_sq, sf2);
            kse[i * n + j] = v;
            kse[j * n + i] = v;
        }
    }
    let mut k = kse.clone();
    for i in 0..n {
        if !noiseless[i] {
            k[i * n + i] += sn2;
        }
    }
    let (chol, _) = Cholesky::factor_with_jitter(&k, n, sf2)?;
    let mut alpha = targets.to_vec();
    chol.solve_in_place(&mut alpha);
    let fit: f64 = targets.iter().zip(&alpha).map(|(y, a)| y * a).sum();
    let lml = -0.5 * fit - 0.5 * chol.log_det() - 0.5 * n as f64 * libm::log(2.0 * PI);

    // W = ααᵀ - K⁻¹
    let mut w = chol.inverse();
    for i in 0..n {
        for j in 0..n {
            w[i * n + j] = alpha[i] * alpha[j] - w[i * n + j];
        }
    }
    let mut grad = vec![0.0; p + 2];
    for i in 0..n {
        for j in 0..n {
            let wk = w[i * n + j] * kse[i * n + j];
            grad[p] += wk;
            if i != j {
                let (xi, xj) = (x(i), x(j));
                for d in 0..p {
                    let diff = xi[d] - xj[d];
                    grad[d] += wk * diff * diff * inv_sq[d];
                }
            }
        }
        if !noiseless[i] {
            grad[p + 1] += w[i * n + i] * sn2;
        }
    }
    grad.iter_mut().for_each(|g| *g *= 0.5);
    if !lml.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    Some((lml, grad))
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

fn logit(u: f64) -> f64 {
    let u = u.clamp(1e-9, 1.0 - 1e-9);
    libm::log(u / (1.0 - u))
}

/// Box in log space: `v = lo + (hi - lo)·sigmoid(z)`.
struct LogBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LogBox {
    fn to_log(&self, z: &[f64]) -> Vec<f64> {
        z.iter().enumerate().map(|(i, &z)| self.lo[i] + (self.hi[i] - self.lo[i]) * sigmoid(z)).collect()
    }

    fn to_z(&self, v: &[f64]) -> Vec<f64> {
        v.iter().enumerate().map(|(i, &v)| logit((v - self.lo[i]) / (self.hi[i] - self.lo[i]))).collect()
    }

    fn jacobian(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &z)| {
                let s = sigmoid(z);
                (self.hi[i] - self.lo[i]) * s * (1.0 - s)
            })
            .collect()
    }
}

/// BFGS with Armijo backtracking; minimizes `f`.
fn bfgs(f: &dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)>, z0: Vec<f64>, max_iters: usize) -> Option<(Vec<f64>, f64)> {
    let k = z0.len();
    let (mut fz, mut g) = f(&z0)?;
    let mut z = z0;
    let mut h = identity(k);
    for _ in 0..max_iters {
        let mut dir: Vec<f64> = (0..k).map(|i| -(0..k).map(|j| h[i * k + j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            h = identity(k);
            dir = g.iter().map(|v| -v).collect();
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let zn: Vec<f64> = z.iter().zip(&dir).map(|(z, d)| z + step * d).collect();
            if let Some((fn_, gn)) = f(&zn) {
                if fn_ <= fz + 1e-4 * step * slope {
                    accepted = Some((zn, fn_, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((zn, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let improvement = fz - fn_;
        z = zn;
        fz = fn_;
        g = gn;
        if sy > 1e-12 {
            bfgs_update(&mut h, &s, &y, sy);
        }
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < 1e-6 || improvement.abs() < 1e-10 * (1.0 + fz.abs()) {
            break;
        }
    }
    Some((z, fz))
}

fn identity(k: usize) -> Vec<f64> {
    let mut h = vec![0.0; k * k];
    for i in 0..k {
        h[i * k + i] = 1.0;
    }
    h
}

fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let k = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h[i * k + j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, libm::sqrt(var))
}

fn usable(s: f64) -> bool {
    s > 1e-9 && s.is_finite()
}

/// Fits kernel hyperparameters to `data` by maximizing the log marginal
/// likelihood of each output dimension, best of `opts.restarts` starts.
///
/// Returned parameters are in raw target units.
pub fn fit_hyperparams<R: Rng + ?Sized>(
    data: &TrainingSet,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<KernelParams, GpError> {
    if data.is_empty() {
        return Err(GpError::EmptyDataset);
    }
    let n = data.len();
    let p = data.input_dim;

    let init_ls: Vec<f64> = (0..p)
        .map(|j| {
            let (_, s) = mean_std((0..n).map(|i| data.input(i)[j]));
            if usable(s) {
                s
            } else {
                opts.length_fallback.as_ref().map_or(1.0, |f| f[j])
            }
        })
        .collect();
    let ls_bounds: Vec<(f64, f64)> = match &opts.length_bounds {
        Some(b) => b.clone(),
        None => init_ls.iter().map(|&l| (l * 1e-2, l * 1e2)).collect(),
    };

    let mut dims = Vec::with_capacity(data.output_dim);
    for dim in 0..data.output_dim {
        let (mean, std) = mean_std(data.targets[dim].iter().copied());
        let scale = if usable(std) && n >= MIN_POINTS_TO_OPTIMIZE { std } else { opts.target_scale_fallback };
        let y: Vec<f64> = data.targets[dim].iter().map(|t| (t - mean) / scale).collect();

        let ls0: Vec<f64> = init_ls.iter().zip(&ls_bounds).map(|(l, b)| l.clamp(b.0, b.1)).collect();
        if n < MIN_POINTS_TO_OPTIMIZE {
            let sf2 = scale * scale;
            dims.push(DimParams::new(ls0, sf2, 1e-3 * sf2));
            continue;
        }

        let mut lo: Vec<f64> = ls_bounds.iter().map(|b| libm::log(b.0)).collect();
        let mut hi: Vec<f64> = ls_bounds.iter().map(|b| libm::log(b.1)).collect();
        lo.push(libm::log(SIGNAL_BOUNDS.0));
        hi.push(libm::log(SIGNAL_BOUNDS.1));
        lo.push(libm::log(NOISE_RATIO_BOUNDS.0));
        hi.push(libm::log(NOISE_RATIO_BOUNDS.1));
        let bx = LogBox { lo, hi };

        // θ = [ln ℓ, ln σ_f², ln r] with σ_n² = r σ_f²
        let objective = |z: &[f64]| -> Option<(f64, Vec<f64>)> {
            let theta = bx.to_log(z);
            let mut lp = theta.clone();
            lp[p + 1] = theta[p] + theta[p + 1];
            let (lml, g) = log_marginal_likelihood(&data.inputs, p, &y, &data.noiseless, &lp)?;
            let mut gt = g.clone();
            gt[p] = g[p] + g[p + 1];
            let jac = bx.jacobian(z);
            Some((-lml, gt.iter().zip(&jac).map(|(g, j)| -g * j).collect()))
        };

        let mut theta0: Vec<f64> = ls0.iter().map(|l| libm::log(*l)).collect();
        theta0.push(0.0);
        theta0.push(libm::log(1e-3));
        let mut best: Option<(Vec<f64>, f64)> = None;
        for restart in 0..opts.restarts.max(1) {
            let start: Vec<f64> = if restart == 0 {
                theta0.clone()
            } else {
                theta0.iter().map(|t| t + rng.random_range(-1.0..1.0)).collect()
            };
            let z0 = bx.to_z(&start);
            if let Some((z, f)) = bfgs(&objective, z0, opts.max_iters) {
                if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
                    best = Some((z, f));
                }
            }
        }
        let (z, _) = best.ok_or(GpError::FitFailure { dim })?;
        let theta = bx.to_log(&z);
        let ls: Vec<f64> = theta[..p].iter().map(|v| libm::exp(*v)).collect();
        let sf2 = libm::exp(theta[p]) * scale * scale;
        let ratio = libm::exp(theta[p + 1]).max(NOISE_FLOOR);
        dims.push(DimParams::new(ls, sf2, ratio * sf2));
    }
    Ok(KernelParams { dims })
}
