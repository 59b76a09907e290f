//! Path and law analysis: occupation densities (local time) with their
//! conservation identities, the integral criterion guaranteeing local-time
//! existence, pointwise Hölder regression, the small-scale covariance
//! rescaling limit, conditional-nondeterminism diagnostics, and the
//! ensemble scaling of local-time regularity in space and time.

use crate::covariance::{self, increment_second_moment};
use crate::error::{Error, Result};
use crate::hurst::HurstFunction;
use crate::kernel;
use crate::quad::{self, Endpoint, QuadratureSpec};
use crate::simulate::{self, PathEnsemble};
use crate::specfun;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

// ---------------------------------------------------------------------------
// binning
// ---------------------------------------------------------------------------

/// Uniform spatial bins `[lo + k·width, lo + (k+1)·width)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    lo: f64,
    width: f64,
    n_bins: usize,
}

impl BinGrid {
    pub fn new(lo: f64, width: f64, n_bins: usize) -> Result<Self> {
        if !lo.is_finite() || !(width > 0.0) || !width.is_finite() {
            return Err(Error::domain(format!(
                "bins need a finite origin and positive width, got lo={lo}, width={width}"
            )));
        }
        if n_bins == 0 {
            return Err(Error::domain("at least one bin is required"));
        }
        Ok(Self { lo, width, n_bins })
    }

    pub fn with_bounds(lo: f64, hi: f64, n_bins: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::domain(format!("bin range must be nonempty, got [{lo}, {hi}]")));
        }
        Self::new(lo, (hi - lo) / n_bins as f64, n_bins)
    }

    /// Data-driven bins: width `2·IQR·n^{-1/3}` (the interquartile-range
    /// rule), padded by one bin on each side so every value lies strictly
    /// inside.
    pub fn freedman_diaconis(values: &[f64]) -> Result<Self> {
        if values.len() < 4 {
            return Err(Error::domain("bin-width selection needs at least 4 values"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("bin-width selection needs finite values"));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let iqr = percentile(&sorted, 0.75) - percentile(&sorted, 0.25);
        let width = 2.0 * iqr * (values.len() as f64).powf(-1.0 / 3.0);
        if !(width > 0.0) {
            return Err(Error::domain(format!(
                "degenerate sample spread (IQR = {iqr}); choose bins explicitly"
            )));
        }
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        let lo = min - width;
        let n_bins = ((max + width - lo) / width).ceil() as usize;
        Self::new(lo, width, n_bins)
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.width * self.n_bins as f64
    }

    /// Bin index of `x`, or `None` if `x` is outside the binned range.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo) {
            return None;
        }
        let k = ((x - self.lo) / self.width) as usize;
        if k < self.n_bins {
            Some(k)
        } else {
            None
        }
    }

    /// The `n_bins + 1` bin edges.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_bins).map(|k| self.lo + k as f64 * self.width).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_bins).map(|k| self.lo + (k as f64 + 0.5) * self.width).collect()
    }
}

/// Interpolated percentile of an already-sorted sample.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

// ---------------------------------------------------------------------------
// local time estimators
// ---------------------------------------------------------------------------

/// Which estimator produced a local-time field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LocalTimeEstimator {
    Binned,
    KernelSmoothed,
}

/// Occupation density field `L̂(t, x)` on a bin grid, sampled at a set of
/// time checkpoints.  Row `k` of `density` is the estimate at checkpoint
/// `k`, in time-per-space units.
#[derive(Clone, Debug)]
pub struct LocalTimeEstimate {
    bins: BinGrid,
    checkpoints: Vec<f64>,
    density: DMatrix<f64>,
    estimator: LocalTimeEstimator,
}

impl LocalTimeEstimate {
    pub fn bins(&self) -> &BinGrid {
        &self.bins
    }

    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }

    pub fn density(&self) -> &DMatrix<f64> {
        &self.density
    }

    pub fn estimator(&self) -> LocalTimeEstimator {
        self.estimator
    }

    /// Total occupation mass `Σ_bins L̂(t_k, bin)·Δx` at checkpoint `k`.
    pub fn mass(&self, k: usize) -> f64 {
        self.density.row(k).iter().sum::<f64>() * self.bins.width()
    }

    /// CSV export: first row the bin edges, then one row per checkpoint
    /// (checkpoint time followed by the per-bin densities).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
        let header: Vec<String> = self.bins.edges().iter().map(|e| e.to_string()).collect();
        w.write_record(&header)
            .map_err(|e| Error::Format(format!("csv header: {e}")))?;
        for (k, t) in self.checkpoints.iter().enumerate() {
            let mut row = Vec::with_capacity(self.bins.n_bins() + 1);
            row.push(t.to_string());
            row.extend((0..self.bins.n_bins()).map(|j| self.density[(k, j)].to_string()));
            w.write_record(&row).map_err(|e| Error::Format(format!("csv row {k}: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn validate_path(times: &[f64], values: &[f64]) -> Result<()> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::domain(format!(
            "a sampled path needs matching times/values with at least 2 points, got {}/{}",
            times.len(),
            values.len()
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("path times must be strictly increasing"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("path values must be finite"));
    }
    Ok(())
}

/// Binned occupation density: each interval `[t_i, t_{i+1})` contributes
/// its length to the bin containing the left-endpoint value, normalized by
/// the bin width.  The total mass at checkpoint `τ` is therefore exactly
/// `τ − t_0`, and the field is monotone in the checkpoint.
pub fn local_time_binned(
    times: &[f64],
    values: &[f64],
    bins: &BinGrid,
    checkpoints: &[f64],
) -> Result<LocalTimeEstimate> {
    validate_path(times, values)?;
    if checkpoints.is_empty() {
        return Err(Error::domain("at least one checkpoint is required"));
    }
    if checkpoints.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("checkpoints must be strictly increasing"));
    }
    let mut cp_idx = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        match times.binary_search_by(|t| t.total_cmp(&c)) {
            Ok(i) => cp_idx.push(i),
            Err(_) => {
                return Err(Error::domain(format!(
                    "checkpoint {c} is not one of the sampling times"
                )))
            }
        }
    }

    let n_bins = bins.n_bins();
    let mut density = DMatrix::zeros(checkpoints.len(), n_bins);
    let mut acc = vec![0.0_f64; n_bins];
    let mut i = 0usize;
    for (row, &k_end) in cp_idx.iter().enumerate() {
        while i < k_end {
            let dt = times[i + 1] - times[i];
            let bin = bins.index_of(values[i]).ok_or_else(|| {
                Error::domain(format!(
                    "path value {} at time {} falls outside the binned range [{}, {})",
                    values[i],
                    times[i],
                    bins.lo(),
                    bins.hi()
                ))
            })?;
            acc[bin] += dt;
            i += 1;
        }
        for (j, a) in acc.iter().enumerate() {
            density[(row, j)] = a / bins.width();
        }
    }
    Ok(LocalTimeEstimate {
        bins: bins.clone(),
        checkpoints: checkpoints.to_vec(),
        density,
        estimator: LocalTimeEstimator::Binned,
    })
}

/// Gaussian-smoothed occupation density at one space-time point:
/// `Σ_{t_{i+1} ≤ t} Δt_i · p_ε(B(t_i) − x)` with
/// `p_ε(y) = (2πε)^{-1/2} exp(−y²/(2ε))`.
pub fn local_time_kernel(
    times: &[f64],
    values: &[f64],
    x: f64,
    t: f64,
    eps: f64,
) -> Result<f64> {
    validate_path(times, values)?;
    if !(eps > 0.0) {
        return Err(Error::domain(format!("smoothing bandwidth must be positive, got {eps}")));
    }
    if !x.is_finite() || !(t >= times[0]) || !(t <= times[times.len() - 1]) {
        return Err(Error::domain(format!(
            "evaluation point (x={x}, t={t}) outside the sampled range"
        )));
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * eps).sqrt();
    let mut sum = 0.0;
    for i in 0..times.len() - 1 {
        if times[i + 1] > t {
            break;
        }
        let d = values[i] - x;
        sum += (times[i + 1] - times[i]) * (-d * d / (2.0 * eps)).exp();
    }
    Ok(norm * sum)
}

/// Residual of the occupation identity
/// `∫ g(B(s)) ds = ∫ g(x) L(t, x) dx` at the final time, with the right
/// side evaluated on bin centers.  Exactly zero for bin indicators; bounded
/// by `Δx · Lip(g) · T` for Lipschitz `g` (midpoint bias).
pub fn occupation_identity_residual(
    times: &[f64],
    values: &[f64],
    g: impl Fn(f64) -> f64,
    bins: &BinGrid,
) -> Result<f64> {
    validate_path(times, values)?;
    let horizon = times[times.len() - 1];
    let est = local_time_binned(times, values, bins, &[horizon])?;
    let mut time_side = 0.0;
    for i in 0..times.len() - 1 {
        time_side += (times[i + 1] - times[i]) * g(values[i]);
    }
    let mut space_side = 0.0;
    for (j, c) in bins.centers().iter().enumerate() {
        space_side += g(*c) * est.density()[(0, j)] * bins.width();
    }
    Ok((time_side - space_side).abs())
}

// ---------------------------------------------------------------------------
// integral criterion for local-time existence
// ---------------------------------------------------------------------------

/// Double integral `∫₀ᵀ∫₀ᵀ ds dt / √(E[(B(t) − B(s))²])`, finite exactly
/// when the process admits a square-integrable occupation density.
///
/// Composite `n × n` cell quadrature: cells touching the diagonal use the
/// closed-form integral of the small-increment power law
/// `c_{h(·)} |t−s|^{−h(·)}` (the integrand's integrable singularity, which
/// midpoint evaluation would badly underestimate); all other cells use
/// midpoint evaluation of the exact second moment.
pub fn berman_integral(
    h: &HurstFunction,
    horizon: f64,
    n: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if n < 16 {
        return Err(Error::domain(format!("cell count must be at least 16, got {n}")));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::domain(format!("horizon must be nonnegative, got {horizon}")));
    }
    if horizon == 0.0 {
        return Ok(0.0);
    }
    let delta = horizon / n as f64;
    let row_sums: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut sum = 0.0;
            // diagonal cell: ∫∫_{cell²} c·|t−s|^{−H} = c·2Δ^{2−H}/((1−H)(2−H))
            let t_mid = (i as f64 + 0.5) * delta;
            let hd = h.eval(t_mid);
            let c = specfun::norm_const_sq(hd)?.sqrt();
            sum += c * 2.0 * delta.powf(2.0 - hd) / ((1.0 - hd) * (2.0 - hd));
            if i + 1 < n {
                // the two cells sharing the corner (t, t) = ((i+1)Δ, (i+1)Δ)
                let t_corner = (i + 1) as f64 * delta;
                let ha = h.eval(t_corner);
                let ca = specfun::norm_const_sq(ha)?.sqrt();
                let two_pow = 2.0_f64.powf(2.0 - ha);
                sum += 2.0 * ca * (two_pow - 2.0) * delta.powf(2.0 - ha)
                    / ((1.0 - ha) * (2.0 - ha));
            }
            for j in (i + 2)..n {
                let s = (i as f64 + 0.5) * delta;
                let t = (j as f64 + 0.5) * delta;
                let m2 = increment_second_moment(s, t, h, spec)?;
                if !(m2 > 0.0) {
                    return Err(Error::Tolerance(format!(
                        "vanishing increment second moment at (s, t) = ({s}, {t})"
                    )));
                }
                sum += 2.0 * delta * delta / m2.sqrt();
            }
            Ok(sum)
        })
        .collect::<Result<_>>()?;
    Ok(row_sums.iter().sum())
}

/// [`berman_integral`] at `n` and `2n` cells, with a divergence alert if
/// the refinement grows the value by more than 10% — the signature of a
/// non-integrable singularity rather than discretization error.
pub fn berman_refinement(
    h: &HurstFunction,
    horizon: f64,
    n: usize,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    let coarse = berman_integral(h, horizon, n, spec)?;
    let fine = berman_integral(h, horizon, 2 * n, spec)?;
    if fine > 1.1 * coarse {
        return Err(Error::Tolerance(format!(
            "refinement grew the occupation-criterion integral from {coarse} to {fine}; \
             the integrand looks non-integrable"
        )));
    }
    Ok((coarse, fine))
}

// ---------------------------------------------------------------------------
// pointwise Hölder exponent
// ---------------------------------------------------------------------------

/// Log-log regression estimate of a pointwise Hölder exponent.
#[derive(Clone, Debug, Serialize)]
pub struct HolderReport {
    pub t0: f64,
    pub estimate: f64,
    pub window: (f64, f64),
    pub residual: f64,
}

/// `n` geometrically spaced points in `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (ll, lh) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (ll + (lh - ll) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

fn ols_loglog(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::domain("regression needs at least 2 points"));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| {
            if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
                Ok((x.ln(), y.ln()))
            } else {
                Err(Error::domain(format!(
                    "log-log regression needs positive finite data, got ({x}, {y})"
                )))
            }
        })
        .collect::<Result<_>>()?;
    let n = logs.len() as f64;
    let xbar = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let var_x: f64 = logs.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    if var_x < 1e-20 {
        return Err(Error::domain("regression window collapsed to a point"));
    }
    let cov: f64 = logs.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = cov / var_x;
    let intercept = ybar - slope * xbar;
    let rms = (logs
        .iter()
        .map(|p| {
            let r = p.1 - (slope * p.0 + intercept);
            r * r
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok((slope, rms))
}

/// Pointwise Hölder exponent at `t0` from exact increment second moments:
/// half the log-log slope of `E[(B(t0+ε) − B(t0))²]` against `ε`.
pub fn holder_exponent(
    t0: f64,
    h: &HurstFunction,
    eps_range: &[f64],
    spec: &QuadratureSpec,
) -> Result<HolderReport> {
    if !(t0 >= 0.0) || !t0.is_finite() {
        return Err(Error::domain(format!("base time must be nonnegative, got {t0}")));
    }
    if eps_range.len() < 5 {
        return Err(Error::domain(format!(
            "the regression window needs at least 5 offsets, got {}",
            eps_range.len()
        )));
    }
    if eps_range.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::domain("offsets must lie in (0, 1)"));
    }
    let points: Vec<(f64, f64)> = eps_range
        .par_iter()
        .map(|&e| Ok((e, increment_second_moment(t0, t0 + e, h, spec)?)))
        .collect::<Result<_>>()?;
    let (slope, rms) = ols_loglog(&points)?;
    let estimate = slope / 2.0;
    if !(estimate > 0.0 && estimate < 1.0) {
        return Err(Error::domain(format!(
            "estimated exponent {estimate} outside (0, 1); the window is outside the \
             scaling regime"
        )));
    }
    let lo = eps_range.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eps_range.iter().cloned().fold(0.0_f64, f64::max);
    Ok(HolderReport { t0, estimate, window: (lo, hi), residual: rms })
}

// ---------------------------------------------------------------------------
// small-scale covariance rescaling
// ---------------------------------------------------------------------------

/// Rescaled increment covariance at scale `ε` against its small-scale
/// limit: returns the pair
///
/// ```text
/// ( ε^{−2h(t0)} · E[(B(t0+εu) − B(t0))(B(t0+εv) − B(t0))],
///   (|u|^{2h(t0)} + |v|^{2h(t0)} − |u−v|^{2h(t0)}) / (2 c²_{h(t0)}) ).
/// ```
///
/// For constant index the two coincide up to quadrature error at every
/// scale; for varying index the gap closes as `ε ↓ 0`.
pub fn lass_covariance_limit(
    t0: f64,
    eps: f64,
    u: f64,
    v: f64,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<(f64, f64)> {
    if !(u >= 0.0 && v >= 0.0) {
        return Err(Error::domain(format!("offsets must be nonnegative, got u={u}, v={v}")));
    }
    if u == 0.0 && v == 0.0 {
        return Ok((0.0, 0.0));
    }
    let h0 = h.eval(t0);
    let raw = covariance::increment_cross_cov(t0, eps, u, v, h, spec)?;
    let rescaled = eps.powf(-2.0 * h0) * raw;
    let csq = specfun::norm_const_sq(h0)?;
    let limit =
        (u.powf(2.0 * h0) + v.powf(2.0 * h0) - (u - v).abs().powf(2.0 * h0)) / (2.0 * csq);
    Ok((rescaled, limit))
}

// ---------------------------------------------------------------------------
// conditional nondeterminism
// ---------------------------------------------------------------------------

fn check_lattice(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::domain(format!(
            "a conditioning lattice needs at least 2 times, got {}",
            times.len()
        )));
    }
    if !(times[0] > 0.0) {
        return Err(Error::domain(format!(
            "lattice times must be positive, got first time {}",
            times[0]
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0] && w[1].is_finite())) {
        return Err(Error::domain("lattice times must be strictly increasing and finite"));
    }
    Ok(())
}

/// Exact covariance matrix of the process at strictly positive times.
fn process_cov_matrix(
    times: &[f64],
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<DMatrix<f64>> {
    let m = times.len();
    let lambdas: Vec<f64> = times.iter().map(|&t| h.eval(t)).collect();
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (i..m).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            covariance::cross_cov_kernel_product(
                times[j],
                times[i],
                lambdas[j],
                lambdas[i],
                spec,
            )
        })
        .collect::<Result<_>>()?;
    let mut sigma = DMatrix::zeros(m, m);
    for (&(i, j), &v) in pairs.iter().zip(vals.iter()) {
        sigma[(i, j)] = v;
        sigma[(j, i)] = v;
    }
    Ok(sigma)
}

/// Ratio of the conditional to the unconditional variance of the terminal
/// increment `B(t_m) − B(t_{m−1})` given the process values at all earlier
/// lattice times — the strength of local nondeterminism at this
/// configuration.  Always in `[0, 1]`; bounded away from 0 exactly when no
/// finite past can reconstruct the next increment.
pub fn lnd_ratio(times: &[f64], h: &HurstFunction, spec: &QuadratureSpec) -> Result<f64> {
    check_lattice(times)?;
    let m = times.len();
    let sigma = process_cov_matrix(times, h, spec)?;
    let var_d =
        sigma[(m - 1, m - 1)] + sigma[(m - 2, m - 2)] - 2.0 * sigma[(m - 1, m - 2)];
    if !(var_d > 0.0) {
        return Err(Error::Tolerance(format!(
            "nonpositive increment variance {var_d} on the lattice"
        )));
    }
    let past = m - 1;
    let a = sigma.view((0, 0), (past, past)).into_owned();
    let c = DVector::from_iterator(
        past,
        (0..past).map(|i| sigma[(m - 1, i)] - sigma[(m - 2, i)]),
    );
    let scale = (0..past).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let chol = simulate::cholesky_with_jitter(a, scale).map_err(|_| {
        Error::Factorization(
            "conditioning block is numerically singular beyond the jitter policy".into(),
        )
    })?;
    let x = chol.solve(&c);
    let cond = var_d - c.dot(&x);
    Ok((cond / var_d).clamp(0.0, 1.0))
}

/// Lower bound for [`lnd_ratio`] that uses only the noise accrued after
/// `t_{m−1}`: the new-noise energy `∫_{t_{m−1}}^{t_m} K(t_m, u)² du`
/// divided by the unconditional increment variance.  No conditioning on
/// the past can remove this part.
pub fn lnd_whole_past_bound(
    times: &[f64],
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_lattice(times)?;
    let m = times.len();
    let (s, t) = (times[m - 2], times[m - 1]);
    let lambda = h.eval(t);
    let inner_spec = spec.scaled(1e-2);
    let fresh = quad::try_integrate_transformed(
        |u| {
            let k = kernel::kernel_value(t, u, lambda, &inner_spec)?;
            Ok(k * k)
        },
        s,
        t,
        Endpoint::Smooth,
        Endpoint::PowerLaw(2.0 * lambda - 1.0),
        spec,
    )?;
    let var_d = increment_second_moment(s, t, h, spec)?;
    if !(var_d > 0.0) {
        return Err(Error::Tolerance(format!(
            "nonpositive increment variance {var_d} on the lattice"
        )));
    }
    Ok(fresh / var_d)
}

/// The strictly positive constant
///
/// ```text
/// 𝓘(a, b) = ∫₀¹∫₀¹ |y−z|^{2b−2} ∫_{Ψ(y,z)}^∞ (v−1)^{1−2b} v^{a−3/2} dv dy dz,
/// Ψ(y, z) = max(y/z, z/y, 2),
/// ```
///
/// which controls the uniform lower bound of increment variances when the
/// index stays in `[a, b]`.  The inner integral depends only on the ratio
/// `y/z`, so rescaling the inner variable collapses the square to a single
/// profile integral:
/// `𝓘 = (1/b)·[J(2)·2^{1−2b}/(2b−1) + ∫₀^{1/2}(1−s)^{2b−2} J(1/s) ds]`
/// with `J(c) = ∫₀^{1/c} x^{2b−a−3/2}(1−x)^{1−2b} dx` (the tail integral
/// after `v ↦ 1/x`).
pub fn lnd_i_lower_bound(a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(0.5 < a && a < b && b < 1.0) {
        return Err(Error::domain(format!(
            "index bounds must satisfy 1/2 < a < b < 1, got a={a}, b={b}"
        )));
    }
    let inner_spec = spec.scaled(1e-2);
    let j_tail = |c: f64, spec_j: &QuadratureSpec| -> Result<f64> {
        quad::try_integrate_power_weight(
            |x| Ok((1.0 - x).powf(1.0 - 2.0 * b)),
            1.0 / c,
            2.0 * b - a - 1.5,
            spec_j,
        )
    };
    let j2 = j_tail(2.0, spec)?;
    let near = j2 * 2.0_f64.powf(1.0 - 2.0 * b) / (2.0 * b - 1.0);
    let profile = quad::try_integrate_transformed(
        |s| {
            if s <= 0.0 {
                return Ok(0.0);
            }
            Ok((1.0 - s).powf(2.0 * b - 2.0) * j_tail(1.0 / s, &inner_spec)?)
        },
        0.0,
        0.5,
        Endpoint::PowerLaw(2.0 * b - a - 0.5),
        Endpoint::Smooth,
        spec,
    )?;
    Ok((near + profile) / b)
}

fn margin_of(sigma_d: &DMatrix<f64>) -> Result<f64> {
    let m = sigma_d.nrows();
    let mut scaled = sigma_d.clone();
    for i in 0..m {
        if !(sigma_d[(i, i)] > 0.0) {
            return Err(Error::domain(format!(
                "increment {i} has nonpositive variance {}",
                sigma_d[(i, i)]
            )));
        }
    }
    for i in 0..m {
        for j in 0..m {
            scaled[(i, j)] /= (sigma_d[(i, i)] * sigma_d[(j, j)]).sqrt();
        }
    }
    // enforce exact symmetry before the eigensolve
    let sym = (&scaled + scaled.transpose()) * 0.5;
    let eigen = nalgebra::linalg::SymmetricEigen::new(sym);
    Ok(eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0))
}

/// Best constant `C` in
/// `Var[Σ uⱼ(B(tⱼ)−B(tⱼ₋₁))] ≥ C·Σ uⱼ² Var[B(tⱼ)−B(tⱼ₋₁)]` over all
/// coefficient vectors: the smallest eigenvalue of the correlation-
/// normalized increment covariance matrix (`t₀ := 0`).
pub fn lnd_quadratic_form_margin(
    times: &[f64],
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_lattice(times)?;
    let m = times.len();
    let sigma = process_cov_matrix(times, h, spec)?;
    let at = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 {
            0.0
        } else {
            sigma[(i as usize, j as usize)]
        }
    };
    let sigma_d = DMatrix::from_fn(m, m, |i, j| {
        let (i, j) = (i as isize, j as isize);
        at(i, j) - at(i, j - 1) - at(i - 1, j) + at(i - 1, j - 1)
    });
    margin_of(&sigma_d)
}

// ---------------------------------------------------------------------------
// ensemble scaling of local-time regularity
// ---------------------------------------------------------------------------

/// Knobs for [`regularity_scaling`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingConfig {
    /// Override the data-driven common bin count.
    pub n_bins: Option<usize>,
    /// Cap on the number of spatial separations in the geometric ladder.
    pub max_space_scales: usize,
    /// Cap on the number of dyadic time-window lengths.
    pub max_time_scales: usize,
    /// Smallest ensemble admitted.
    pub min_paths: usize,
    /// Smallest time grid admitted.
    pub min_grid_points: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            n_bins: None,
            max_space_scales: 7,
            max_time_scales: 8,
            min_paths: 500,
            min_grid_points: 4096,
        }
    }
}

/// Fitted scaling exponents of the local-time field across an ensemble.
#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    /// Exponent of the median spatial increment `|L̂(T, x) − L̂(T, y)|`
    /// against `|x − y|`.
    pub space_exponent: f64,
    pub space_residual: f64,
    /// Reference slope `(1 − H) / (2H)` for the spatial modulus.
    pub space_target: f64,
    pub n_space_scales: usize,
    /// Exponent of the median of `sup_x L̂([0, τ], x)` against `τ`.
    pub time_exponent: f64,
    pub time_residual: f64,
    /// Reference slope `1 − H` for the window supremum.
    pub time_target: f64,
    pub n_time_scales: usize,
    pub n_paths: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ensemble check of local-time regularity: fits the spatial modulus
/// exponent of `L̂(T, ·)` over a geometric ladder of bin separations inside
/// the typical occupied range and the temporal growth exponent of
/// `sup_x L̂([0, τ], ·)` over dyadic window lengths,
/// using the per-path binned estimator on a common bin grid and the median
/// across paths as the ensemble statistic.  `h_max` is the largest index
/// value attained on the horizon; the report carries the reference slopes
/// `(1−H)/(2H)` and `1−H` it implies.
pub fn regularity_scaling(
    ens: &PathEnsemble,
    h_max: f64,
    config: &ScalingConfig,
) -> Result<ScalingReport> {
    if !(h_max > 0.5 && h_max < 1.0) {
        return Err(Error::domain(format!(
            "the index ceiling must lie in (1/2, 1), got {h_max}"
        )));
    }
    if ens.n_paths() < config.min_paths {
        return Err(Error::domain(format!(
            "scaling analysis needs at least {} paths, got {}",
            config.min_paths,
            ens.n_paths()
        )));
    }
    let times = ens.grid().times();
    if times.len() < config.min_grid_points {
        return Err(Error::domain(format!(
            "scaling analysis needs at least {} grid points, got {}",
            config.min_grid_points,
            times.len()
        )));
    }

    // common bin grid: global range, per-path bandwidth rule, ensemble median
    let x = ens.paths();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in x.iter() {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    let bins = match config.n_bins {
        Some(nb) => {
            let pad = (hi - lo).max(f64::MIN_POSITIVE) / nb as f64;
            BinGrid::with_bounds(lo - pad, hi + pad, nb)?
        }
        None => {
            let widths: Vec<f64> = (0..ens.n_paths())
                .into_par_iter()
                .map(|i| {
                    let row: Vec<f64> = ens.path(i);
                    BinGrid::freedman_diaconis(&row).map(|b| b.width())
                })
                .collect::<Result<_>>()?;
            // Half the median per-path bandwidth: the common grid must
            // resolve several distinct separations inside one path's
            // occupied range, which the per-path histogram width is too
            // coarse to allow.
            let w = 0.5 * median(widths);
            let pad = w;
            let n_bins = ((hi + pad - (lo - pad)) / w).ceil() as usize;
            BinGrid::new(lo - pad, w, n_bins)?
        }
    };

    // dyadic time anchors τ_k ≈ T·2^{−k}, snapped to grid times
    let horizon = ens.grid().horizon();
    let mut anchor_idx: Vec<usize> = Vec::new();
    for k in 0..config.max_time_scales {
        let target = horizon / (1u64 << k) as f64;
        let idx = match times.binary_search_by(|t| t.total_cmp(&target)) {
            Ok(i) => i,
            Err(i) => {
                // nearest neighbor among the two candidates
                if i == 0 {
                    0
                } else if i >= times.len() {
                    times.len() - 1
                } else if (times[i] - target).abs() < (target - times[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        };
        if idx < 16 {
            break;
        }
        if anchor_idx.last() == Some(&idx) {
            break;
        }
        anchor_idx.push(idx);
    }
    if anchor_idx.len() < 4 {
        return Err(Error::Resolution(format!(
            "only {} dyadic window lengths available; need at least 4",
            anchor_idx.len()
        )));
    }
    let mut checkpoints: Vec<f64> = anchor_idx.iter().map(|&i| times[i]).collect();
    checkpoints.reverse(); // ascending for the estimator

    // per-path local-time fields at all checkpoints
    let fields: Vec<LocalTimeEstimate> = (0..ens.n_paths())
        .into_par_iter()
        .map(|i| {
            let row = ens.path(i);
            local_time_binned(times, &row, &bins, &checkpoints)
        })
        .collect::<Result<_>>()?;
    let full_row = checkpoints.len() - 1; // τ_0 = T after the reversal

    // Spatial separations must live strictly inside a typical path's
    // occupied range: the global bin span covers the whole ensemble and is
    // several times wider than any single path's support, so a ladder built
    // against it either saturates (a shift comparable to the occupied width
    // pairs interior mass with empty bins) or hugs the one-bin quantization
    // floor, and the fitted slope collapses.  Build the ladder against the
    // ensemble median occupied span instead: start at two bins to stay
    // above the floor, cap the largest shift at a quarter of the occupied
    // span, and space the steps geometrically.
    let occupied_spans: Vec<f64> = fields
        .par_iter()
        .filter_map(|f| {
            let row = f.density().row(full_row);
            let occupied: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
            Some((*occupied.last()? - *occupied.first()? + 1) as f64)
        })
        .collect();
    if occupied_spans.len() * 2 < ens.n_paths() {
        return Err(Error::Resolution(
            "fewer than half the paths occupy any bin at the full horizon".into(),
        ));
    }
    let cap = (median(occupied_spans) / 4.0).floor();
    let mut seps: Vec<usize> = Vec::new();
    if cap >= 2.0 {
        let steps = config.max_space_scales.max(2);
        let ratio = (cap / 2.0).powf(1.0 / (steps - 1) as f64);
        for k in 0..steps {
            let sep = (2.0 * ratio.powi(k as i32)).round() as usize;
            if seps.last() != Some(&sep) {
                seps.push(sep);
            }
        }
    }
    let mut space_points = Vec::new();
    let mut space_scales = 0usize;
    for &sep in &seps {
        let per_path: Vec<f64> = fields
            .par_iter()
            .filter_map(|f| {
                let row = f.density().row(full_row);
                let occupied: Vec<usize> =
                    (0..row.len()).filter(|&j| row[j] > 0.0).collect();
                let (first, last) = (*occupied.first()?, *occupied.last()?);
                if last < first + sep {
                    return None;
                }
                let mut sum = 0.0;
                let mut cnt = 0usize;
                for j in first..=(last - sep) {
                    sum += (row[j + sep] - row[j]).abs();
                    cnt += 1;
                }
                Some(sum / cnt as f64)
            })
            .collect();
        if per_path.len() * 2 < ens.n_paths() {
            continue;
        }
        let med = median(per_path);
        if med > 0.0 {
            space_points.push((sep as f64 * bins.width(), med));
            space_scales += 1;
        }
    }
    if space_scales < 4 {
        return Err(Error::Resolution(format!(
            "only {space_scales} usable spatial separations; need at least 4"
        )));
    }

    // window supremum over dyadic interval lengths
    let mut time_points = Vec::new();
    for (k, &tau) in checkpoints.iter().enumerate() {
        let sups: Vec<f64> = fields
            .par_iter()
            .map(|f| f.density().row(k).iter().cloned().fold(0.0_f64, f64::max))
            .collect();
        let med = median(sups);
        if med > 0.0 {
            time_points.push((tau, med));
        }
    }
    if time_points.len() < 4 {
        return Err(Error::Resolution(format!(
            "only {} usable window lengths; need at least 4",
            time_points.len()
        )));
    }

    let (space_exponent, space_residual) = ols_loglog(&space_points)?;
    let (time_exponent, time_residual) = ols_loglog(&time_points)?;
    Ok(ScalingReport {
        space_exponent,
        space_residual,
        space_target: (1.0 - h_max) / (2.0 * h_max),
        n_space_scales: space_scales,
        time_exponent,
        time_residual,
        time_target: 1.0 - h_max,
        n_time_scales: time_points.len(),
        n_paths: ens.n_paths(),
    })
}
