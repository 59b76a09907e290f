//! Shared fixtures: exact constant-index Gaussian ensembles built from the
//! closed-form stationary-increment covariance, bypassing per-entry
//! quadrature so fine grids stay cheap.
#![allow(dead_code)] // each test target compiles its own copy and uses a subset

use mfvolterra::covariance::{CovMethod, CovarianceMatrix};
use mfvolterra::grid::TimeGrid;
use mfvolterra::simulate::{sample_from_covariance, PathEnsemble, RandomSeed};
use mfvolterra::specfun;
use nalgebra::DMatrix;

/// Closed-form covariance of the constant-index process on a grid:
/// `(s^{2H} + t^{2H} − |t−s|^{2H}) / (2 c²_H)`.
pub fn fbm_covariance(grid: &TimeGrid, hurst: f64) -> CovarianceMatrix {
    let c2 = specfun::norm_const_sq(hurst).unwrap();
    let times = grid.times();
    let n = times.len();
    let two_h = 2.0 * hurst;
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let (s, t) = (times[j], times[i]);
            let v = (s.powf(two_h) + t.powf(two_h) - (t - s).abs().powf(two_h)) / (2.0 * c2);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    CovarianceMatrix::from_parts(grid.clone(), entries, CovMethod::KernelProduct).unwrap()
}

/// Exact constant-index ensemble drawn from [`fbm_covariance`].
pub fn fbm_ensemble(grid: &TimeGrid, hurst: f64, n_paths: usize, seed: u64) -> PathEnsemble {
    let cov = fbm_covariance(grid, hurst);
    sample_from_covariance(&cov, n_paths, RandomSeed::new(seed)).unwrap()
}

/// Gaussian smoothing of a piecewise-constant bin field, evaluated at `at`:
/// `Σ_b field[b] ∫_bin p_ε(x − at) dx`, with each bin's window integral
/// taken by midpoint rule on 8 sub-cells so its error is negligible next to
/// the bandwidths used in the tests.  Lets a box-binned estimate be read at
/// the same bandwidth as a kernel-smoothed one.
pub fn gaussian_smooth_field(centers: &[f64], width: f64, field: &[f64], eps: f64, at: f64) -> f64 {
    let mut acc = 0.0;
    for (b, &cb) in centers.iter().enumerate() {
        for s in 0..8 {
            let x = cb - width / 2.0 + (s as f64 + 0.5) * width / 8.0;
            let d = x - at;
            acc += field[b] * (-d * d / (2.0 * eps)).exp() * width / 8.0;
        }
    }
    acc / (2.0 * std::f64::consts::PI * eps).sqrt()
}
