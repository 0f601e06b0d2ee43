#![allow(dead_code)]

use barl_core::{kernel_eval, GpModel, KernelParams, DimParams, Rng64, TrainingSet};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Dense posterior of the latent delta at `xs` for output `dim`:
/// mean vector (prior mean included) and full covariance.
pub fn dense_posterior(model: &GpModel, dim: usize, xs: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let data = model.training();
    let p = &model.params().dims[dim];
    let k = |a: &[f64], b: &[f64]| kernel_eval(a, b, p).unwrap();
    let n = data.len();
    let m = xs.len();
    let m0 = model.prior_mean()[dim];
    let kxx = DMatrix::from_fn(m, m, |i, j| k(&xs[i], &xs[j]));
    if n == 0 {
        return (vec![m0; m], kxx);
    }
    let jitter = model.jitter()[dim];
    let kdd = DMatrix::from_fn(n, n, |i, j| {
        let mut v = k(data.input(i), data.input(j));
        if i == j {
            v += jitter + if data.noiseless[i] { 0.0 } else { p.noise_variance };
        }
        v
    });
    let inv = kdd.try_inverse().expect("invertible Gram matrix");
    let kdx = DMatrix::from_fn(n, m, |i, j| k(data.input(i), &xs[j]));
    let y = DVector::from_fn(n, |i, _| data.targets[dim][i] - m0);
    let mean = kdx.transpose() * &inv * y;
    let cov = kxx - kdx.transpose() * &inv * &kdx;
    (mean.iter().map(|v| v + m0).collect(), cov)
}

pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    0.5 * (1.0 + libm::erf((x - mean) / (2.0 * var).sqrt()))
}

/// Two-sided Kolmogorov-Smirnov statistic of `samples` against a Gaussian.
pub fn ks_statistic(samples: &[f64], mean: f64, var: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = normal_cdf(x, mean, var);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic critical value `sqrt(-ln(α/2)/2) / sqrt(n)`.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

pub fn random_params(rng: &mut Rng64, out: usize, input: usize) -> KernelParams {
    KernelParams {
        dims: (0..out)
            .map(|_| {
                let sf2 = rng.random_range(0.5..2.0);
                DimParams::new((0..input).map(|_| rng.random_range(0.5..1.5)).collect(), sf2, sf2 * rng.random_range(1e-3..1e-2))
            })
            .collect(),
    }
}

pub fn random_set(rng: &mut Rng64, n: usize, input: usize, out: usize) -> TrainingSet {
    let mut set = TrainingSet::empty(input, out);
    for _ in 0..n {
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..out).map(|_| rng.random_range(-1.0..1.0)).collect();
        set.push(&x, &y, false);
    }
    set
}

pub fn random_input(rng: &mut Rng64, input: usize) -> Vec<f64> {
    (0..input).map(|_| rng.random_range(-1.5..1.5)).collect()
}

pub fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

/// Latent posterior mean and variance at `x` after adding noiseless
/// observations `extra_values` at `extra_inputs`, by dense inversion.
pub fn dense_conditioned(model: &GpModel, dim: usize, extra_inputs: &[Vec<f64>], extra_values: &[f64], x: &[f64]) -> (f64, f64) {
    let data = model.training();
    let p = &model.params().dims[dim];
    let k = |a: &[f64], b: &[f64]| kernel_eval(a, b, p).unwrap();
    let m0 = model.prior_mean()[dim];
    let mut inputs: Vec<&[f64]> = (0..data.len()).map(|i| data.input(i)).collect();
    let mut diag: Vec<f64> = (0..data.len()).map(|i| if data.noiseless[i] { 0.0 } else { p.noise_variance }).collect();
    let mut y: Vec<f64> = (0..data.len()).map(|i| data.targets[dim][i] - m0).collect();
    for (xi, v) in extra_inputs.iter().zip(extra_values) {
        inputs.push(xi);
        diag.push(0.0);
        y.push(v - m0);
    }
    let n = inputs.len();
    let jitter = 1e-10 * p.signal_variance;
    let km = DMatrix::from_fn(n, n, |i, j| k(inputs[i], inputs[j]) + if i == j { diag[i] + jitter } else { 0.0 });
    let inv = km.try_inverse().expect("invertible");
    let kx = DVector::from_fn(n, |i, _| k(inputs[i], x));
    let y = DVector::from_vec(y);
    let mean = m0 + (kx.transpose() * &inv * y)[0];
    let var = k(x, x) - (kx.transpose() * &inv * &kx)[0];
    (mean, var)
}

/// Joint draw from N(mean, cov).
pub fn sample_mvn(rng: &mut Rng64, mean: &[f64], cov: &DMatrix<f64>) -> Vec<f64> {
    let n = mean.len();
    let reg = cov + DMatrix::identity(n, n) * 1e-10 * cov.diagonal().max().max(1e-300);
    let l = reg.cholesky().expect("PSD covariance").l();
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    (l * z).iter().zip(mean).map(|(a, m)| a + m).collect()
}
