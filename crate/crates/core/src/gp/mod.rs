//! Multi-output Gaussian-process model of the state-change function.
//!
//! Each output dimension is an independent GP with a squared-exponential ARD
//! kernel over the concatenated `(state, action)` input. Targets are state
//! deltas; predictions are returned in next-state coordinates.

mod fit;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{E, PI};

use crate::error::GpError;
use crate::linalg::{dot, Cholesky};

pub use fit::{fit_hyperparams, log_marginal_likelihood, FitOptions};

/// Lower bound of the noise variance relative to the signal variance.
pub const NOISE_FLOOR: f64 = 1e-6;

/// Kernel hyperparameters of one output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DimParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl DimParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Self {
        Self { lengthscales, signal_variance, noise_variance }
    }

    fn is_valid(&self) -> bool {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        self.lengthscales.iter().all(|&l| pos(l))
            && pos(self.signal_variance)
            && pos(self.noise_variance)
            && self.noise_variance >= NOISE_FLOOR * self.signal_variance * (1.0 - 1e-12)
    }

    pub(crate) fn inv_sq_lengthscales(&self) -> Vec<f64> {
        self.lengthscales.iter().map(|l| 1.0 / (l * l)).collect()
    }
}

/// Per-output-dimension kernel hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub dims: Vec<DimParams>,
}

impl KernelParams {
    /// Same parameters for every output dimension.
    pub fn uniform(
        output_dim: usize,
        input_dim: usize,
        lengthscale: f64,
        signal_variance: f64,
        noise_variance: f64,
    ) -> Self {
        let d = DimParams::new(vec![lengthscale; input_dim], signal_variance, noise_variance);
        Self { dims: vec![d; output_dim] }
    }

    pub fn output_dim(&self) -> usize {
        self.dims.len()
    }

    pub fn validate(&self, input_dim: usize) -> Result<(), GpError> {
        for (dim, p) in self.dims.iter().enumerate() {
            if p.lengthscales.len() != input_dim {
                return Err(GpError::DimensionMismatch {
                    expected: input_dim,
                    got: p.lengthscales.len(),
                });
            }
            if !p.is_valid() {
                return Err(GpError::InvalidParams { dim });
            }
        }
        Ok(())
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        self.dims.iter().map(|p| p.noise_variance).collect()
    }
}

#[inline]
pub(crate) fn se_kernel(x: &[f64], y: &[f64], inv_sq_ls: &[f64], signal_variance: f64) -> f64 {
    let mut r2 = 0.0;
    for j in 0..x.len() {
        let d = x[j] - y[j];
        r2 += d * d * inv_sq_ls[j];
    }
    signal_variance * libm::exp(-0.5 * r2)
}

/// Squared-exponential ARD kernel `σ_f² exp(-½ Σ ((x_j - x2_j)/ℓ_j)²)`.
pub fn kernel_eval(x: &[f64], x2: &[f64], params: &DimParams) -> Result<f64, GpError> {
    let p = params.lengthscales.len();
    for v in [x.len(), x2.len()] {
        if v != p {
            return Err(GpError::DimensionMismatch { expected: p, got: v });
        }
    }
    Ok(se_kernel(x, x2, &params.inv_sq_lengthscales(), params.signal_variance))
}

/// Entropy of independent Gaussians with variances `variance + noise`.
pub fn predictive_entropy(variance: &[f64], noise: &[f64]) -> Result<f64, GpError> {
    if variance.len() != noise.len() {
        return Err(GpError::DimensionMismatch { expected: variance.len(), got: noise.len() });
    }
    let mut h = 0.0;
    for (&v, &n) in variance.iter().zip(noise) {
        if !(v > 0.0 && n > 0.0) {
            return Err(GpError::NonPositiveVariance);
        }
        h += 0.5 * libm::log(2.0 * PI * E * (v + n));
    }
    Ok(h)
}

/// One observed `(s, a, s')` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
}

impl Transition {
    pub fn new(state: Vec<f64>, action: Vec<f64>, next_state: Vec<f64>) -> Self {
        Self { state, action, next_state }
    }

    /// The GP input `(s, a)`.
    pub fn input(&self) -> Vec<f64> {
        let mut x = self.state.clone();
        x.extend_from_slice(&self.action);
        x
    }
}

/// Transitions in insertion order, all sharing one `(d, n_a)` signature.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    state_dim: usize,
    action_dim: usize,
    transitions: Vec<Transition>,
}

impl Dataset {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self { state_dim, action_dim, transitions: Vec::new() }
    }

    pub fn push(&mut self, t: Transition) -> Result<(), GpError> {
        for (expected, got) in [
            (self.state_dim, t.state.len()),
            (self.action_dim, t.action.len()),
            (self.state_dim, t.next_state.len()),
        ] {
            if expected != got {
                return Err(GpError::DimensionMismatch { expected, got });
            }
        }
        self.transitions.push(t);
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
}

/// GP training inputs and per-output delta targets.
///
/// Points flagged `noiseless` get no observation noise on the kernel diagonal
/// (only jitter); they represent hypothetical noise-free observations.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub input_dim: usize,
    pub output_dim: usize,
    /// Row-major `n × input_dim`.
    pub inputs: Vec<f64>,
    /// `targets[dim][i]`.
    pub targets: Vec<Vec<f64>>,
    pub noiseless: Vec<bool>,
}

impl TrainingSet {
    pub fn empty(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            inputs: Vec::new(),
            targets: vec![Vec::new(); output_dim],
            noiseless: Vec::new(),
        }
    }

    /// Targets are `s' - s`.
    pub fn from_dataset(data: &Dataset) -> Self {
        Self::from_dataset_with(data, |s, sn, out| {
            for i in 0..out.len() {
                out[i] = sn[i] - s[i];
            }
        })
    }

    /// Targets computed by `delta(s, s', out)`, e.g. with angle wrapping.
    pub fn from_dataset_with(data: &Dataset, delta: impl Fn(&[f64], &[f64], &mut [f64])) -> Self {
        let d = data.state_dim();
        let mut set = Self::empty(d + data.action_dim(), d);
        let mut buf = vec![0.0; d];
        for t in data.transitions() {
            delta(&t.state, &t.next_state, &mut buf);
            set.push(&t.input(), &buf, false);
        }
        set
    }

    pub fn push(&mut self, input: &[f64], target: &[f64], noiseless: bool) {
        debug_assert_eq!(input.len(), self.input_dim);
        debug_assert_eq!(target.len(), self.output_dim);
        self.inputs.extend_from_slice(input);
        for (t, &v) in self.targets.iter_mut().zip(target) {
            t.push(v);
        }
        self.noiseless.push(noiseless);
    }

    pub fn len(&self) -> usize {
        self.noiseless.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noiseless.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Per-output mean of the targets, zero when empty.
    pub fn target_means(&self) -> Vec<f64> {
        let n = self.len();
        self.targets
            .iter()
            .map(|t| if n == 0 { 0.0 } else { t.iter().sum::<f64>() / n as f64 })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct DimFactor {
    inv_sq_ls: Vec<f64>,
    chol: Cholesky,
    /// `(K + Σ)⁻¹ (y - m)`
    alpha: Vec<f64>,
    jitter: f64,
}

/// Posterior predictive at one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Next-state mean, `s + E[Δ]`.
    pub mean: Vec<f64>,
    /// Latent variance of `Δ` per dimension, observation noise excluded.
    pub variance: Vec<f64>,
}

/// Kernel cross-terms of one query input, reused across conditionings.
#[derive(Debug, Clone)]
pub struct QueryPoint {
    x: Vec<f64>,
    /// `L⁻¹ k(X, x)` per output dimension.
    q: Vec<Vec<f64>>,
    /// Latent variance per output dimension.
    pub variance: Vec<f64>,
}

/// GP posterior over state deltas. Immutable once built.
#[derive(Debug, Clone)]
pub struct GpModel {
    params: KernelParams,
    data: TrainingSet,
    prior_mean: Vec<f64>,
    factors: Vec<DimFactor>,
}

impl GpModel {
    /// Builds the posterior with the empirical target mean as prior mean.
    pub fn new(params: KernelParams, data: TrainingSet) -> Result<Self, GpError> {
        let mean = data.target_means();
        Self::with_prior_mean(params, data, mean)
    }

    pub fn with_prior_mean(
        params: KernelParams,
        data: TrainingSet,
        prior_mean: Vec<f64>,
    ) -> Result<Self, GpError> {
        params.validate(data.input_dim)?;
        if params.output_dim() != data.output_dim || prior_mean.len() != data.output_dim {
            return Err(GpError::DimensionMismatch {
                expected: data.output_dim,
                got: params.output_dim(),
            });
        }
        if data.input_dim < data.output_dim {
            return Err(GpError::DimensionMismatch {
                expected: data.output_dim,
                got: data.input_dim,
            });
        }
        let n = data.len();
        let mut factors = Vec::with_capacity(data.output_dim);
        for (dim, p) in params.dims.iter().enumerate() {
            let inv_sq_ls = p.inv_sq_lengthscales();
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = se_kernel(data.input(i), data.input(j), &inv_sq_ls, p.signal_variance);
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
                if !data.noiseless[i] {
                    k[i * n + i] += p.noise_variance;
                }
            }
            let (chol, jitter) = Cholesky::factor_with_jitter(&k, n, p.signal_variance)
                .ok_or(GpError::Singular { dim })?;
            let mut alpha: Vec<f64> = data.targets[dim].iter().map(|y| y - prior_mean[dim]).collect();
            chol.solve_in_place(&mut alpha);
            factors.push(DimFactor { inv_sq_ls, chol, alpha, jitter });
        }
        Ok(Self { params, data, prior_mean, factors })
    }

    /// Adds hypothetical noise-free observations and refactorizes.
    pub fn with_noiseless_points(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self, GpError> {
        let mut data = self.data.clone();
        for (x, y) in inputs.iter().zip(targets) {
            self.check_input(x)?;
            data.push(x, y, true);
        }
        Self::with_prior_mean(self.params.clone(), data, self.prior_mean.clone())
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn training(&self) -> &TrainingSet {
        &self.data
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    pub fn input_dim(&self) -> usize {
        self.data.input_dim
    }

    pub fn state_dim(&self) -> usize {
        self.data.output_dim
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Diagonal jitter used in the factorization of each output dimension.
    pub fn jitter(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.jitter).collect()
    }

    pub fn noise_variances(&self) -> Vec<f64> {
        self.params.noise_variances()
    }


    pub(crate) fn chol(&self, dim: usize) -> &Cholesky {
        &self.factors[dim].chol
    }

    pub(crate) fn inv_sq_ls(&self, dim: usize) -> &[f64] {
        &self.factors[dim].inv_sq_ls
    }

    fn check_input(&self, x: &[f64]) -> Result<(), GpError> {
        if x.len() != self.data.input_dim {
            return Err(GpError::DimensionMismatch { expected: self.data.input_dim, got: x.len() });
        }
        Ok(())
    }

    fn cross_kernel(&self, dim: usize, x: &[f64]) -> Vec<f64> {
        let p = &self.params.dims[dim];
        let f = &self.factors[dim];
        (0..self.data.len())
            .map(|i| se_kernel(self.data.input(i), x, &f.inv_sq_ls, p.signal_variance))
            .collect()
    }

    /// Exact posterior predictive at `x = (s, a)`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, GpError> {
        let q = self.query(x)?;
        let mut mean = vec![0.0; self.state_dim()];
        self.mean_into(x, &mut mean);
        Ok(Prediction { mean, variance: q.variance })
    }

    /// Posterior mean in next-state coordinates, without allocation of the
    /// variance terms. `x` must have length `input_dim`.
    pub fn mean_into(&self, x: &[f64], out: &mut [f64]) {
        for dim in 0..self.state_dim() {
            let p = &self.params.dims[dim];
            let f = &self.factors[dim];
            let mut m = self.prior_mean[dim];
            for i in 0..self.data.len() {
                m += f.alpha[i] * se_kernel(self.data.input(i), x, &f.inv_sq_ls, p.signal_variance);
            }
            out[dim] = x[dim] + m;
        }
    }

    /// Precomputes the kernel terms of `x` for variance queries.
    pub fn query(&self, x: &[f64]) -> Result<QueryPoint, GpError> {
        self.check_input(x)?;
        let mut q = Vec::with_capacity(self.state_dim());
        let mut variance = Vec::with_capacity(self.state_dim());
        for dim in 0..self.state_dim() {
            let mut v = self.cross_kernel(dim, x);
            self.factors[dim].chol.solve_lower_in_place(&mut v);
            let var = self.params.dims[dim].signal_variance - dot(&v, &v);
            variance.push(var.max(0.0));
            q.push(v);
        }
        Ok(QueryPoint { x: x.to_vec(), q, variance })
    }

    /// Prepares conditioning on `extra` inputs as noise-free observations.
    pub fn condition_on(&self, extra: &[Vec<f64>]) -> Result<Conditioned<'_>, GpError> {
        for x in extra {
            self.check_input(x)?;
        }
        let n = self.data.len();
        let m = extra.len();
        let mut dims = Vec::with_capacity(self.state_dim());
        for dim in 0..self.state_dim() {
            let p = &self.params.dims[dim];
            let f = &self.factors[dim];
            // a[j] = L⁻¹ k(X, e_j), stored row-major m × n
            let mut a = vec![0.0; m * n];
            for (j, e) in extra.iter().enumerate() {
                let row = &mut a[j * n..(j + 1) * n];
                for (i, r) in row.iter_mut().enumerate() {
                    *r = se_kernel(self.data.input(i), e, &f.inv_sq_ls, p.signal_variance);
                }
                f.chol.solve_lower_in_place(row);
            }
            // Schur complement K_EE + jitter·I - Aᵀ A
            let mut s = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..=i {
                    let v = se_kernel(&extra[i], &extra[j], &f.inv_sq_ls, p.signal_variance)
                        - dot(&a[i * n..(i + 1) * n], &a[j * n..(j + 1) * n]);
                    s[i * m + j] = v;
                    s[j * m + i] = v;
                }
            }
            let factor = factor_schur(&s, m, f.jitter, p.signal_variance).ok_or(GpError::Singular { dim })?;
            dims.push(CondDim { a, s: factor });
        }
        Ok(Conditioned { model: self, extra: extra.to_vec(), dims })
    }

    /// Latent variance at `x` after conditioning on `extra` as noise-free points.
    pub fn condition_variance(&self, extra: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>, GpError> {
        let q = self.query(x)?;
        Ok(self.condition_on(extra)?.variance_at(&q))
    }
}

fn factor_schur(s: &[f64], m: usize, jitter: f64, scale: f64) -> Option<Cholesky> {
    // The extras carry the model's jitter as their noise; escalate beyond it
    // the same way the training factorization does.
    let mut work = s.to_vec();
    for i in 0..m {
        work[i * m + i] += jitter;
    }
    if let Some(c) = Cholesky::factor(&work, m) {
        return Some(c);
    }
    Cholesky::factor_with_jitter(&work, m, scale).map(|(c, _)| c)
}

#[derive(Debug, Clone)]
struct CondDim {
    a: Vec<f64>,
    s: Cholesky,
}

/// A model augmented with hypothetical noise-free inputs. Only variances are
/// available: they do not depend on the (unknown) targets.
#[derive(Debug, Clone)]
pub struct Conditioned<'m> {
    model: &'m GpModel,
    extra: Vec<Vec<f64>>,
    dims: Vec<CondDim>,
}

impl Conditioned<'_> {
    pub fn variance_at(&self, query: &QueryPoint) -> Vec<f64> {
        let n = self.model.len();
        let m = self.extra.len();
        let mut out = Vec::with_capacity(self.dims.len());
        let mut c = vec![0.0; m];
        for (dim, cd) in self.dims.iter().enumerate() {
            let p = &self.model.params.dims[dim];
            let inv = self.model.inv_sq_ls(dim);
            let q = &query.q[dim];
            for j in 0..m {
                c[j] = se_kernel(&self.extra[j], &query.x, inv, p.signal_variance)
                    - dot(&cd.a[j * n..(j + 1) * n], q);
            }
            cd.s.solve_lower_in_place(&mut c);
            out.push((query.variance[dim] - dot(&c, &c)).max(0.0));
        }
        out
    }

    pub fn extra_inputs(&self) -> &[Vec<f64>] {
        &self.extra
    }
}
