mod common;

use barl_core::{rng_from_seed, sample_path, sample_paths_shared_basis, GpModel, KernelParams, TrainingSet};
use common::*;

fn deltas(path: &barl_core::PosteriorPath<'_>, x: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    path.eval_input_into(x, &mut out);
    (0..d).map(|k| out[k] - x[k]).collect()
}

#[test]
fn prior_paths_have_the_signal_variance() {
    let params = KernelParams::uniform(2, 3, 0.8, 1.7, 1e-3);
    let model = GpModel::new(params, TrainingSet::empty(3, 2)).unwrap();
    let mut rng = rng_from_seed(11);
    let xs = [vec![0.0, 0.0, 0.0], vec![0.5, -1.0, 2.0]];
    let mut samples = vec![vec![Vec::new(); 2]; xs.len()];
    for _ in 0..2000 {
        let path = sample_path(&model, &mut rng).unwrap();
        for (i, x) in xs.iter().enumerate() {
            for (k, v) in deltas(&path, x, 2).into_iter().enumerate() {
                samples[i][k].push(v);
            }
        }
    }
    for per_x in &samples {
        for s in per_x {
            let (_, var) = mean_var(s);
            assert!((var - 1.7).abs() < 0.17, "{var}");
        }
    }
}

#[test]
fn path_moments_match_the_exact_posterior() {
    let mut rng = rng_from_seed(12);
    let model = GpModel::new(random_params(&mut rng, 2, 3), random_set(&mut rng, 5, 3, 2)).unwrap();
    let x = random_input(&mut rng, 3);
    let n = 2000;
    let mut samples = vec![Vec::new(); 2];
    for _ in 0..n {
        let path = sample_path(&model, &mut rng).unwrap();
        for (k, v) in deltas(&path, &x, 2).into_iter().enumerate() {
            samples[k].push(v);
        }
    }
    let pred = model.predict(&x).unwrap();
    for k in 0..2 {
        let (m, v) = mean_var(&samples[k]);
        let exact_m = pred.mean[k] - x[k];
        let exact_v = pred.variance[k];
        let se_m = (exact_v / n as f64).sqrt();
        let se_v = exact_v * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((m - exact_m).abs() < 3.0 * se_m, "dim {k}: mean {m} vs {exact_m}");
        assert!((v - exact_v).abs() < 3.0 * se_v, "dim {k}: var {v} vs {exact_v}");
    }
}

/// Path marginals at held-out inputs against the exact predictive Gaussian.
pub fn ks_marginals(seed: u64) -> Vec<(f64, f64)> {
    let mut rng = rng_from_seed(seed);
    let model = GpModel::new(random_params(&mut rng, 2, 3), random_set(&mut rng, 5, 3, 2)).unwrap();
    let xs: Vec<Vec<f64>> = (0..10).map(|_| random_input(&mut rng, 3)).collect();
    let n = 2000;
    let mut samples = vec![vec![Vec::with_capacity(n); 2]; xs.len()];
    for _ in 0..n {
        let path = sample_path(&model, &mut rng).unwrap();
        for (i, x) in xs.iter().enumerate() {
            for (k, v) in deltas(&path, x, 2).into_iter().enumerate() {
                samples[i][k].push(v);
            }
        }
    }
    let mut out = Vec::new();
    for (i, x) in xs.iter().enumerate() {
        let pred = model.predict(x).unwrap();
        for k in 0..2 {
            let d = ks_statistic(&samples[i][k], pred.mean[k] - x[k], pred.variance[k]);
            out.push((d, ks_critical(0.01, n)));
        }
    }
    out
}

#[test]
fn path_marginals_pass_ks_tests() {
    for (d, crit) in ks_marginals(13) {
        assert!(d < crit, "KS statistic {d} >= {crit}");
    }
}

/// Max abs error of the empirical covariance of shared-basis paths on a
/// 10-point grid, averaged over a few bases.
fn covariance_error(model: &GpModel, grid: &[Vec<f64>], features: usize, seed: u64) -> f64 {
    let (_, exact) = dense_posterior(model, 0, grid);
    let mut total = 0.0;
    let bases = 4;
    for b in 0..bases {
        let mut rng = rng_from_seed(seed + b);
        let paths = sample_paths_shared_basis(model, features, 4000, &mut rng).unwrap();
        let vals: Vec<Vec<f64>> = paths.iter().map(|p| grid.iter().map(|x| deltas(p, x, 1)[0]).collect()).collect();
        let n = vals.len() as f64;
        let means: Vec<f64> = (0..grid.len()).map(|i| vals.iter().map(|v| v[i]).sum::<f64>() / n).collect();
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                let c = vals.iter().map(|v| (v[i] - means[i]) * (v[j] - means[j])).sum::<f64>() / (n - 1.0);
                worst = worst.max((c - exact[(i, j)]).abs());
            }
        }
        total += worst;
    }
    total / bases as f64
}

#[test]
fn more_features_shrink_covariance_error() {
    let mut rng = rng_from_seed(14);
    let model = GpModel::new(random_params(&mut rng, 1, 2), random_set(&mut rng, 5, 2, 1)).unwrap();
    let grid: Vec<Vec<f64>> = (0..10).map(|i| vec![-1.5 + 0.33 * i as f64, 0.7 - 0.15 * i as f64]).collect();
    let e256 = covariance_error(&model, &grid, 256, 100);
    let e1024 = covariance_error(&model, &grid, 1024, 200);
    assert!(e1024 < e256, "M=256: {e256}, M=1024: {e1024}");
}
