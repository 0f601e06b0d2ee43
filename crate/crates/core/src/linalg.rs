//! Dense Cholesky factorization and triangular solves on row-major buffers.

use alloc::vec;
use alloc::vec::Vec;

/// Jitter is relative to the signal variance: start at 1e-8, grow ×10 up to 1e-4.
pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-4;
const JITTER_GROWTH: f64 = 10.0;

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors the symmetric matrix `a` (only the lower triangle is read).
    /// Returns `None` when `a` is not numerically positive definite.
    pub fn factor(a: &[f64], n: usize) -> Option<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for k in 0..j {
                    sum -= ri[k] * rj[k];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return None;
                    }
                    l[i * n + i] = libm::sqrt(sum);
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    /// Factors `a + jitter·I`, escalating the jitter from `JITTER_START·scale`
    /// to `JITTER_MAX·scale`. Returns the factor and the jitter actually used.
    pub fn factor_with_jitter(a: &[f64], n: usize, scale: f64) -> Option<(Self, f64)> {
        let mut jitter = JITTER_START * scale;
        let mut work = a.to_vec();
        loop {
            for i in 0..n {
                work[i * n + i] = a[i * n + i] + jitter;
            }
            if let Some(c) = Self::factor(&work, n) {
                return Some((c, jitter));
            }
            jitter *= JITTER_GROWTH;
            if jitter > JITTER_MAX * scale * (1.0 + 1e-9) {
                return None;
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn factor_data(&self) -> &[f64] {
        &self.l
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let mut sum = b[i];
            for (k, lk) in row.iter().enumerate() {
                sum -= lk * b[k];
            }
            b[i] = sum / self.l[i * n + i];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut sum = b[i];
            for k in i + 1..n {
                sum -= self.l[k * n + i] * b[k];
            }
            b[i] = sum / self.l[i * n + i];
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    /// `ln det A`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| libm::log(self.l[i * self.n + i])).sum::<f64>() * 2.0
    }

    /// Dense `A⁻¹`, row-major.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
