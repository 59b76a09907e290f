//! Sample-path ensembles of the process by two independent constructions:
//!
//! * [`sample_cholesky`] — exact Gaussian sampling from the factorized
//!   covariance matrix, correct to factorization accuracy at the grid
//!   times;
//! * [`sample_volterra`] — discretization of the defining stochastic
//!   integral against white noise on a fine cell partition, carrying a
//!   controlled variance bias that vanishes under cell refinement.
//!
//! Both are deterministic in `(seed root, path index)` and bit-identical
//! for any worker-thread count: each path owns a counter-mode generator
//! derived from its index, and all cross-path reductions happen serially.

use crate::covariance::{CovMethod, CovarianceMatrix};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hurst::HurstFunction;
use crate::kernel;
use crate::quad::{self, Endpoint, QuadratureSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Root seed with a per-path subkey derivation.  The subkey construction
/// mixes `(root, path index)` through two rounds of a 64-bit finalizer and
/// expands the result into a stream-cipher key, so path `i` draws the same
/// noise whether it is generated first, last, or on another thread.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomSeed {
    root: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomSeed {
    pub fn new(root: u64) -> Self {
        Self { root }
    }

    pub fn root(self) -> u64 {
        self.root
    }

    /// Independent generator for one path.
    pub fn subkey(self, path_index: usize) -> ChaCha12Rng {
        let mut state = self.root ^ (path_index as u64).wrapping_mul(0xA24B_AED4_963E_E407);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }
}

/// Which construction produced an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    Cholesky,
    Volterra,
}

impl SampleMethod {
    pub fn name(self) -> &'static str {
        match self {
            SampleMethod::Cholesky => "cholesky",
            SampleMethod::Volterra => "volterra",
        }
    }
}

/// An ensemble of sample paths: row `i` is path `i`, column `k` the value
/// at grid time `t_k`.  The `t = 0` column is exactly zero and every entry
/// is finite; both are enforced at construction and on import.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    grid: TimeGrid,
    paths: DMatrix<f64>,
    method: SampleMethod,
    seed: RandomSeed,
}

const BINARY_MAGIC: &[u8; 4] = b"MFVL";
const BINARY_VERSION: u32 = 1;

impl PathEnsemble {
    pub fn new(
        grid: TimeGrid,
        paths: DMatrix<f64>,
        method: SampleMethod,
        seed: RandomSeed,
    ) -> Result<Self> {
        if paths.ncols() != grid.len() {
            return Err(Error::domain(format!(
                "paths have {} columns but the grid has {} points",
                paths.ncols(),
                grid.len()
            )));
        }
        if paths.nrows() == 0 {
            return Err(Error::domain("an ensemble needs at least one path"));
        }
        for i in 0..paths.nrows() {
            if paths[(i, 0)] != 0.0 {
                return Err(Error::domain(format!(
                    "path {i} starts at {} instead of 0",
                    paths[(i, 0)]
                )));
            }
        }
        if paths.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("ensemble contains non-finite values"));
        }
        Ok(Self { grid, paths, method, seed })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> &DMatrix<f64> {
        &self.paths
    }

    pub fn n_paths(&self) -> usize {
        self.paths.nrows()
    }

    pub fn method(&self) -> SampleMethod {
        self.method
    }

    pub fn seed(&self) -> RandomSeed {
        self.seed
    }

    /// Copy of one path in time order.
    pub fn path(&self, i: usize) -> Vec<f64> {
        self.paths.row(i).iter().cloned().collect()
    }

    /// Marginal sample at one grid time across all paths.
    pub fn marginal(&self, time_index: usize) -> Vec<f64> {
        self.paths.column(time_index).iter().cloned().collect()
    }

    /// CSV export: header row of grid times, then one row per path.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
        let header: Vec<String> = self.grid.times().iter().map(|t| t.to_string()).collect();
        w.write_record(&header)
            .map_err(|e| Error::Format(format!("csv header: {e}")))?;
        for i in 0..self.paths.nrows() {
            let row: Vec<String> =
                (0..self.paths.ncols()).map(|j| self.paths[(i, j)].to_string()).collect();
            w.write_record(&row).map_err(|e| Error::Format(format!("csv row {i}: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Binary dump: 16-byte header (magic `MFVL`, version, n_paths,
    /// n_times, all little-endian u32 after the magic) followed by the
    /// matrix column-major as little-endian f64.  Bit-exact round trip.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&BINARY_VERSION.to_le_bytes())?;
        w.write_all(&(self.paths.nrows() as u32).to_le_bytes())?;
        w.write_all(&(self.paths.ncols() as u32).to_le_bytes())?;
        for v in self.paths.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a binary dump back.  The grid and provenance tags are supplied
    /// by the caller (the file stores only shapes and values); shape
    /// mismatches and corrupted headers are format errors.
    pub fn read_binary(
        path: &Path,
        grid: &TimeGrid,
        method: SampleMethod,
        seed: RandomSeed,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?} in {}",
                magic,
                path.display()
            )));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != BINARY_VERSION {
            return Err(Error::Format(format!("unsupported dump version {version}")));
        }
        r.read_exact(&mut word)?;
        let n_paths = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n_times = u32::from_le_bytes(word) as usize;
        if n_times != grid.len() {
            return Err(Error::Format(format!(
                "dump has {n_times} time points but the grid has {}",
                grid.len()
            )));
        }
        let mut buf = vec![0u8; n_paths * n_times * 8];
        r.read_exact(&mut buf)?;
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::Format("trailing bytes after path data".into()));
        }
        let values: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk size")))
            .collect();
        let paths = DMatrix::from_vec(n_paths, n_times, values);
        Self::new(grid.clone(), paths, method, seed)
    }
}

/// Exact Gaussian sampling: factorize the kernel-product covariance matrix
/// and push per-path standard normal vectors through the factor.
///
/// Near-singular matrices (smooth processes on fine grids) are repaired by
/// adding diagonal jitter starting at 1e-14 × max diagonal and escalating
/// tenfold; beyond 1e-8 × max diagonal the factorization aborts instead of
/// silently distorting the law.
pub fn sample_cholesky(
    grid: &TimeGrid,
    h: &HurstFunction,
    n_paths: usize,
    seed: RandomSeed,
    spec: &QuadratureSpec,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be at least 1"));
    }
    let cov = CovarianceMatrix::build(grid, h, CovMethod::KernelProduct, spec)?;
    sample_from_covariance(&cov, n_paths, seed)
}

/// Exact Gaussian sampling from an already-built covariance matrix (same
/// factorization and seeding policy as [`sample_cholesky`]).
pub fn sample_from_covariance(
    cov: &CovarianceMatrix,
    n_paths: usize,
    seed: RandomSeed,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be at least 1"));
    }
    let grid = cov.grid();
    let times = grid.times();
    // The t = 0 row/column is identically zero and would make the matrix
    // singular; factor the active block only.
    let active: Vec<usize> = (0..times.len()).filter(|&i| times[i] > 0.0).collect();
    let k = active.len();
    let mut block = DMatrix::zeros(k, k);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            block[(a, b)] = cov.entries()[(i, j)];
        }
    }
    let max_diag = cov.max_diagonal();
    let factor = factorize_with_jitter(block, max_diag)?;

    let n_times = times.len();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed.subkey(p);
            let z = DVector::from_iterator(k, (0..k).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let x = &factor * z;
            let mut row = vec![0.0; n_times];
            for (a, &i) in active.iter().enumerate() {
                row[i] = x[a];
            }
            row
        })
        .collect();

    let paths = DMatrix::from_fn(n_paths, n_times, |i, j| rows[i][j]);
    PathEnsemble::new(grid.clone(), paths, SampleMethod::Cholesky, seed)
}

/// Cholesky factorization with escalating diagonal jitter
/// (1e-14 × scale up to 1e-8 × scale, tenfold steps); shared policy for
/// every symmetric solve in the crate.
pub(crate) fn cholesky_with_jitter(
    block: DMatrix<f64>,
    scale_hint: f64,
) -> Result<nalgebra::linalg::Cholesky<f64, nalgebra::Dyn>> {
    let scale = if scale_hint > 0.0 { scale_hint } else { 1.0 };
    let mut jitter = 0.0_f64;
    loop {
        let mut attempt = block.clone();
        if jitter > 0.0 {
            for i in 0..attempt.nrows() {
                attempt[(i, i)] += jitter;
            }
        }
        if let Some(ch) = nalgebra::linalg::Cholesky::new(attempt) {
            return Ok(ch);
        }
        jitter = if jitter == 0.0 { 1e-14 * scale } else { jitter * 10.0 };
        if jitter > 1e-8 * scale {
            return Err(Error::Factorization(format!(
                "factorization failed even with jitter {:.3e} (scale {:.3e})",
                jitter / 10.0,
                scale_hint
            )));
        }
    }
}

fn factorize_with_jitter(block: DMatrix<f64>, max_diag: f64) -> Result<DMatrix<f64>> {
    Ok(cholesky_with_jitter(block, max_diag)?.l())
}

/// Cell-average weights of the stochastic-integral discretization:
/// `w[i][j] = Δ^{-1/2} ∫_{cell_j ∩ (0, t_i]} K_{h(t_i)}(t_i, u) du` over a
/// uniform `n_sub`-cell partition of `(0, T]`.
///
/// Integral (L¹) weights rather than midpoint values: the kernel's mass
/// near `u → 0` and `u → t_i` sits in integrable singularities that a point
/// evaluation badly misses.  The remaining L² discrepancy is the declared
/// variance bias of the sampler, shrinking under refinement.
pub fn volterra_weights(
    grid: &TimeGrid,
    h: &HurstFunction,
    n_sub: usize,
    spec: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    if n_sub < grid.len() {
        return Err(Error::domain(format!(
            "n_sub = {n_sub} must be at least the grid size {}",
            grid.len()
        )));
    }
    let horizon = grid.horizon();
    let delta = horizon / n_sub as f64;
    let sqrt_delta = delta.sqrt();
    let times = grid.times();
    let n_times = times.len();
    let inner_spec = spec.scaled(1e-2);

    let rows: Vec<Vec<f64>> = (0..n_times)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let t = times[i];
            let mut row = vec![0.0; n_sub];
            if t == 0.0 {
                return Ok(row);
            }
            let lambda = h.eval(t);
            for (j, w) in row.iter_mut().enumerate() {
                let lo = j as f64 * delta;
                if lo >= t {
                    break;
                }
                let hi = ((j + 1) as f64 * delta).min(t);
                let mass = if j == 0 {
                    // u^{1/2−λ} is an exact power weight at the origin.
                    quad::try_integrate_power_weight(
                        |u| kernel::kernel_tail_integral(t, u, lambda, &inner_spec),
                        hi,
                        0.5 - lambda,
                        spec,
                    )?
                } else if hi == t {
                    quad::try_integrate_transformed(
                        |u| kernel::kernel_value(t, u, lambda, &inner_spec),
                        lo,
                        hi,
                        Endpoint::Smooth,
                        Endpoint::PowerLaw(lambda - 0.5),
                        spec,
                    )?
                } else {
                    quad::try_integrate(
                        |u| kernel::kernel_value(t, u, lambda, &inner_spec),
                        lo,
                        hi,
                        spec,
                    )?
                };
                *w = mass / sqrt_delta;
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    Ok(DMatrix::from_fn(n_times, n_sub, |i, j| rows[i][j]))
}

/// Discretize the defining integral: `B(t_i) ≈ Σ_j w[i][j] ξ_j` with one
/// i.i.d. standard normal per cell and path.
pub fn sample_volterra(
    grid: &TimeGrid,
    h: &HurstFunction,
    n_sub: usize,
    n_paths: usize,
    seed: RandomSeed,
    spec: &QuadratureSpec,
) -> Result<PathEnsemble> {
    if n_paths == 0 {
        return Err(Error::domain("n_paths must be at least 1"));
    }
    let weights = volterra_weights(grid, h, n_sub, spec)?;
    let n_times = grid.len();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = seed.subkey(p);
            let xi = DVector::from_iterator(
                n_sub,
                (0..n_sub).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
            let x = &weights * xi;
            (0..n_times).map(|i| x[i]).collect()
        })
        .collect();
    let paths = DMatrix::from_fn(n_paths, n_times, |i, j| rows[i][j]);
    PathEnsemble::new(grid.clone(), paths, SampleMethod::Volterra, seed)
}

/// Unbiased sample covariance across paths at all grid-time pairs.
pub fn empirical_cov(ens: &PathEnsemble) -> Result<CovarianceMatrix> {
    let n = ens.n_paths();
    if n < 2 {
        return Err(Error::domain("sample covariance needs at least 2 paths"));
    }
    let x = ens.paths();
    let n_times = x.ncols();
    let mut centered = x.clone();
    for j in 0..n_times {
        let mean = x.column(j).iter().sum::<f64>() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    CovarianceMatrix::from_parts(ens.grid().clone(), cov, CovMethod::Empirical)
}

/// Standard errors of empirical covariance entries under the Gaussian
/// fourth-moment formula: `SE_ij = sqrt((Σ_ii Σ_jj + Σ_ij²) / n)`, with Σ
/// the exact covariance.
pub fn cov_standard_errors(exact: &CovarianceMatrix, n_paths: usize) -> DMatrix<f64> {
    let e = exact.entries();
    let n = n_paths as f64;
    DMatrix::from_fn(e.nrows(), e.ncols(), |i, j| {
        ((e[(i, i)] * e[(j, j)] + e[(i, j)] * e[(i, j)]) / n).sqrt()
    })
}

/// Two-sample Kolmogorov–Smirnov statistic `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::domain("KS statistic needs nonempty samples"));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("KS statistic needs finite samples"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0_f64;
    while i < n && j < m {
        let (x, y) = (xs[i], ys[j]);
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    Ok(d)
}

/// Large-sample critical value `c(α)·sqrt((n+m)/(n·m))` with
/// `c(α) = sqrt(−ln(α/2)/2)` for the two-sample KS test.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("significance level must be in (0,1), got {alpha}")));
    }
    if n == 0 || m == 0 {
        return Err(Error::domain("KS critical value needs nonempty samples"));
    }
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    Ok(c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt())
}
