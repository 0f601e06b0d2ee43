//! Power-law ("colored") Gaussian noise for action sequences.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;

/// Draws `count` sequences of `horizon` steps in `n_a` dimensions, laid out
/// `[sample][t][dim]`. Each `(sample, dim)` series has spectral density
/// `∝ 1/f^beta` and unit variance at every timestep.
pub fn colored_noise<R: Rng + ?Sized>(beta: f64, horizon: usize, n_a: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; count * horizon * n_a];
    if horizon == 0 {
        return out;
    }
    if horizon == 1 {
        out.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        return out;
    }
    let t_len = horizon;
    let n_freq = t_len / 2 + 1;
    let even = t_len % 2 == 0;
    // frequency k/T; the zero frequency borrows the lowest nonzero one
    let scale: Vec<f64> = (0..n_freq)
        .map(|k| {
            let f = k.max(1) as f64 / t_len as f64;
            libm::pow(f, -beta / 2.0)
        })
        .collect();
    // Variance of the inverse real DFT is the same at every t.
    let mut var = 2.0 * scale[0] * scale[0];
    for (k, s) in scale.iter().enumerate().skip(1) {
        let nyquist = even && k == n_freq - 1;
        var += if nyquist { 2.0 } else { 4.0 } * s * s;
    }
    let norm = libm::sqrt(var) / t_len as f64;

    let mut cos = vec![0.0; n_freq * t_len];
    let mut sin = vec![0.0; n_freq * t_len];
    for k in 0..n_freq {
        for t in 0..t_len {
            let phase = 2.0 * PI * (k * t) as f64 / t_len as f64;
            cos[k * t_len + t] = libm::cos(phase);
            sin[k * t_len + t] = libm::sin(phase);
        }
    }
    let mut re = vec![0.0; n_freq];
    let mut im = vec![0.0; n_freq];
    for sample in 0..count {
        for dim in 0..n_a {
            for k in 0..n_freq {
                re[k] = scale[k] * rng.sample::<f64, _>(StandardNormal);
                im[k] = scale[k] * rng.sample::<f64, _>(StandardNormal);
            }
            re[0] *= SQRT_2;
            im[0] = 0.0;
            if even {
                re[n_freq - 1] *= SQRT_2;
                im[n_freq - 1] = 0.0;
            }
            for t in 0..t_len {
                let mut x = re[0];
                for k in 1..n_freq {
                    let c = cos[k * t_len + t];
                    let s = sin[k * t_len + t];
                    let w = if even && k == n_freq - 1 { 1.0 } else { 2.0 };
                    x += w * (re[k] * c - im[k] * s);
                }
                out[(sample * horizon + t) * n_a + dim] = x / t_len as f64 / norm;
            }
        }
    }
    out
}
