//! Pathwise posterior function samples.
//!
//! A path is a random-Fourier-feature draw from the SE-ARD prior plus an exact
//! kernel-basis correction toward the data, so it can be evaluated anywhere
//! as a deterministic dynamics function.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::GpError;
use crate::gp::{se_kernel, GpModel};

/// Random features per output dimension.
pub const NUM_FEATURES: usize = 512;

#[derive(Debug, Clone)]
struct PathDim {
    /// Column-major: component `j` of feature `i` is at `j * M + i`.
    frequencies: Vec<f64>,
    phases: Vec<f64>,
    /// `w_i · sqrt(2σ_f²/M)`
    weights: Vec<f64>,
    /// `(K + Σ)⁻¹ (y - m - f(X) - ε)`
    update: Vec<f64>,
}

/// One approximate sample from the GP posterior over dynamics.
#[derive(Debug, Clone)]
pub struct PosteriorPath<'m> {
    model: &'m GpModel,
    dims: Vec<PathDim>,
}

/// Draws a posterior path with [`NUM_FEATURES`] random features.
pub fn sample_path<'m, R: Rng + ?Sized>(model: &'m GpModel, rng: &mut R) -> Result<PosteriorPath<'m>, GpError> {
    sample_path_with_features(model, NUM_FEATURES, rng)
}

pub fn sample_path_with_features<'m, R: Rng + ?Sized>(
    model: &'m GpModel,
    num_features: usize,
    rng: &mut R,
) -> Result<PosteriorPath<'m>, GpError> {
    let basis = draw_basis(model, num_features, rng);
    let features = basis.into_iter().map(|(f, b, amp)| (f, b, draw_weights(amp, num_features, rng))).collect();
    with_features(model, features, rng)
}

/// Draws `count` paths that share one set of frequencies and phases and
/// differ only in their weights and simulated noise. Their covariance is
/// that of the fixed feature basis rather than the exact kernel.
pub fn sample_paths_shared_basis<'m, R: Rng + ?Sized>(
    model: &'m GpModel,
    num_features: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<PosteriorPath<'m>>, GpError> {
    let basis = draw_basis(model, num_features, rng);
    (0..count)
        .map(|_| {
            let features =
                basis.iter().map(|(f, b, amp)| (f.clone(), b.clone(), draw_weights(*amp, num_features, rng))).collect();
            with_features(model, features, rng)
        })
        .collect()
}

/// Per output dim: column-major frequencies, phases and weight scale.
fn draw_basis<R: Rng + ?Sized>(model: &GpModel, num_features: usize, rng: &mut R) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let p = model.input_dim();
    model
        .params()
        .dims
        .iter()
        .map(|params| {
            let mut frequencies = vec![0.0; num_features * p];
            for i in 0..num_features {
                for (j, l) in params.lengthscales.iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    frequencies[j * num_features + i] = z / l;
                }
            }
            let phases = (0..num_features).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            (frequencies, phases, libm::sqrt(2.0 * params.signal_variance / num_features as f64))
        })
        .collect()
}

fn draw_weights<R: Rng + ?Sized>(amp: f64, num_features: usize, rng: &mut R) -> Vec<f64> {
    (0..num_features).map(|_| amp * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Pathwise update for given prior features; the noise draws come from `rng`.
fn with_features<'m, R: Rng + ?Sized>(
    model: &'m GpModel,
    features: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    rng: &mut R,
) -> Result<PosteriorPath<'m>, GpError> {
    let data = model.training();
    let n = data.len();
    let jitter = model.jitter();
    let mut dims = Vec::with_capacity(features.len());
    for (dim, (frequencies, phases, weights)) in features.into_iter().enumerate() {
        let mut pd = PathDim { frequencies, phases, weights, update: Vec::new() };
        let noise = model.params().dims[dim].noise_variance;
        let mut resid = vec![0.0; n];
        for (i, r) in resid.iter_mut().enumerate() {
            let diag = jitter[dim] + if data.noiseless[i] { 0.0 } else { noise };
            let eps = libm::sqrt(diag) * rng.sample::<f64, _>(StandardNormal);
            *r = data.targets[dim][i] - model.prior_mean()[dim] - pd.prior(data.input(i)) - eps;
        }
        model.chol(dim).solve_in_place(&mut resid);
        pd.update = resid;
        dims.push(pd);
    }
    Ok(PosteriorPath { model, dims })
}

impl PathDim {
    #[inline]
    fn prior(&self, x: &[f64]) -> f64 {
        const BLOCK: usize = 64;
        let m = self.phases.len();
        let mut buf = [0.0; BLOCK];
        let mut f = 0.0;
        let mut start = 0;
        while start < m {
            let len = BLOCK.min(m - start);
            let arg = &mut buf[..len];
            arg.copy_from_slice(&self.phases[start..start + len]);
            for (j, xj) in x.iter().enumerate() {
                let omega = &self.frequencies[j * m + start..j * m + start + len];
                for (a, o) in arg.iter_mut().zip(omega) {
                    *a += o * xj;
                }
            }
            for (a, w) in arg.iter().zip(&self.weights[start..start + len]) {
                f += w * cos(*a);
            }
            start += len;
        }
        f
    }
}

/// Branch-free cosine, absolute error below 1e-12 for |x| < 1e5.
///
/// Reduces by the nearest multiple `kπ` and sums the even Taylor series of
/// the remainder through y^18, negated for odd `k`. Being branch-free it
/// vectorizes across a feature block.
#[inline(always)]
fn cos(x: f64) -> f64 {
    // π = HI + MID + LO, HI and MID with 31 significant bits so k·HI and
    // k·MID are exact for |k| < 2^22
    const HI: f64 = 3.141_592_653_468_251_2;
    const MID: f64 = 1.215_420_100_718_692e-10;
    const LO: f64 = 5.825_464_112_186_712e-20;
    // adding 2^52 + 2^51 rounds to an integer held in the low mantissa bits
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    const C: [f64; 10] = [
        1.0,
        -1.0 / 2.0,
        1.0 / 24.0,
        -1.0 / 720.0,
        1.0 / 40_320.0,
        -1.0 / 3_628_800.0,
        1.0 / 479_001_600.0,
        -1.0 / 87_178_291_200.0,
        1.0 / 20_922_789_888_000.0,
        -1.0 / 6_402_373_705_728_000.0,
    ];
    let t = x * (1.0 / PI) + SHIFT;
    let k = t - SHIFT;
    let y = ((x - k * HI) - k * MID) - k * LO;
    let y2 = y * y;
    let mut p = C[9];
    for c in C[..9].iter().rev() {
        p = p * y2 + c;
    }
    f64::from_bits(p.to_bits() ^ (t.to_bits() << 63))
}

impl PosteriorPath<'_> {
    pub fn model(&self) -> &GpModel {
        self.model
    }

    /// Sampled state delta at input `x = (s, a)`.
    pub fn delta_into(&self, x: &[f64], out: &mut [f64]) {
        let data = self.model.training();
        for (dim, pd) in self.dims.iter().enumerate() {
            let inv = self.model.inv_sq_ls(dim);
            let sf2 = self.model.params().dims[dim].signal_variance;
            let mut v = self.model.prior_mean()[dim] + pd.prior(x);
            for (i, u) in pd.update.iter().enumerate() {
                v += u * se_kernel(data.input(i), x, inv, sf2);
            }
            out[dim] = v;
        }
    }

    /// Next state `s + Δ(s, a)`; no clipping or wrapping.
    pub fn eval(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>, GpError> {
        let d = self.model.state_dim();
        if s.len() != d {
            return Err(GpError::DimensionMismatch { expected: d, got: s.len() });
        }
        if d + a.len() != self.model.input_dim() {
            return Err(GpError::DimensionMismatch { expected: self.model.input_dim() - d, got: a.len() });
        }
        let mut x = s.to_vec();
        x.extend_from_slice(a);
        let mut out = vec![0.0; d];
        self.eval_input_into(&x, &mut out);
        Ok(out)
    }

    /// Next state for a concatenated input; `x` must have length `input_dim`.
    pub fn eval_input_into(&self, x: &[f64], out: &mut [f64]) {
        self.delta_into(x, out);
        for (o, s) in out.iter_mut().zip(x) {
            *o += s;
        }
    }
}
