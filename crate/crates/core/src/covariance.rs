//! Exact second-order structure of the process: cross-covariance of the
//! two-parameter family `X(t, λ) = ∫₀ᵗ K_λ(t,u) W(du)` by two independent
//! routes, the variance profile `R(t) = t^{2h(t)}/c²_{h(t)}` and its
//! derivative, increment second moments, and full covariance matrices on
//! time grids.
//!
//! The two cross-covariance routes are deliberately kept apart and never
//! share quadrature plumbing beyond the generic integrators:
//!
//! * [`cross_cov_kernel_product`] integrates `K_λ(t,u) K_{λ′}(s,u)` over
//!   `(0, t∧s]`;
//! * [`cross_cov_beta_integral`] evaluates the closed double integral with
//!   the beta-function weight `β̃(y,z)|y−z|^{λ+λ′−2}(y/z)^{λ−λ′}`.
//!
//! Their agreement is one of the headline verification targets.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hurst::HurstFunction;
use crate::kernel;
use crate::quad::{self, Endpoint, QuadratureSpec};
use crate::specfun;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

fn check_index(lambda: f64) -> Result<()> {
    if !(lambda > 0.5 && lambda < 1.0) {
        return Err(Error::domain(format!("index must lie in (1/2, 1), got {lambda}")));
    }
    Ok(())
}

fn check_times(t: f64, s: f64) -> Result<()> {
    if !(t >= 0.0 && s >= 0.0) || !t.is_finite() || !s.is_finite() {
        return Err(Error::domain(format!("times must be finite and nonnegative, got {t}, {s}")));
    }
    Ok(())
}

/// `E[X(t,λ) X(s,λ′)]` as the inner product of the two kernel slices over
/// the shared noise interval `(0, t∧s]`.  The integrand behaves like
/// `u^{1−λ−λ′}` at zero and like a positive power of the distance to `t∧s`
/// at the upper end; both endpoints are announced to the integrator.
pub fn cross_cov_kernel_product(
    t: f64,
    s: f64,
    lambda: f64,
    lambda_p: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_index(lambda)?;
    check_index(lambda_p)?;
    check_times(t, s)?;
    let m = t.min(s);
    if m == 0.0 {
        return Ok(0.0);
    }
    let inner_spec = spec.scaled(1e-2);
    let right_exponent = if t == s {
        lambda + lambda_p - 1.0
    } else if s < t {
        lambda_p - 0.5
    } else {
        lambda - 0.5
    };
    quad::try_integrate_transformed(
        |u| {
            let a = kernel::kernel_value(t, u, lambda, &inner_spec)?;
            let b = kernel::kernel_value(s, u, lambda_p, &inner_spec)?;
            Ok(a * b)
        },
        0.0,
        m,
        Endpoint::PowerLaw(1.0 - lambda - lambda_p),
        Endpoint::PowerLaw(right_exponent),
        spec,
    )
}

/// `E[X(t,λ) X(s,λ′)]` as the double integral
///
/// ```text
/// ∫₀ᵗ dy ∫₀ˢ dz  β̃(y,z) |y−z|^{λ+λ′−2} (y/z)^{λ−λ′},
/// β̃ = β(2−λ−λ′, λ′−1/2)·1{y>z} + β(2−λ−λ′, λ−1/2)·1{y<z}.
/// ```
///
/// The inner integral is split at the diagonal `z = y`, each triangle
/// handled with a power-law endpoint transform; the outer integral is split
/// at `y = t∧s` where the inner integral's composition changes.
pub fn cross_cov_beta_integral(
    t: f64,
    s: f64,
    lambda: f64,
    lambda_p: f64,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_index(lambda)?;
    check_index(lambda_p)?;
    check_times(t, s)?;
    if t == 0.0 || s == 0.0 {
        return Ok(0.0);
    }
    let mu = lambda + lambda_p;
    let weight_y_above = specfun::beta(2.0 - mu, lambda_p - 0.5)?;
    let weight_y_below = specfun::beta(2.0 - mu, lambda - 0.5)?;
    let dl = lambda - lambda_p;
    let inner_spec = spec.scaled(1e-2);

    // Inner integral over z at fixed y, in three pieces that each hand one
    // singular endpoint to the power-weight integrator as an exact distance
    // (never re-forming y−z by subtraction next to the diagonal, which
    // quantizes to ulp multiples and poisons the diverging factor):
    //   (0, m/2]  with weight z^{−(λ−λ′)},       m = y∧s,
    //   [m/2, m]  with weight (y−z)^{μ−2}  via δ = y−z,
    //   [y, s]    with weight (z−y)^{μ−2}  via δ = z−y   (only when y < s).
    let inner = |y: f64| -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        let m = y.min(s);
        let half = 0.5 * m;
        let low = quad::try_integrate_power_weight(
            |z| Ok(y.powf(dl) * (y - z).powf(mu - 2.0)),
            half,
            -dl,
            &inner_spec,
        )?;
        let g_diag = |d: f64| Ok((y / (y - d)).powf(dl));
        let mut diag = quad::try_integrate_power_weight(&g_diag, y - half, mu - 2.0, &inner_spec)?;
        if y > m {
            diag -= quad::try_integrate_power_weight(&g_diag, y - m, mu - 2.0, &inner_spec)?;
        }
        let mut total = weight_y_above * (low + diag);
        if y < s {
            let above = quad::try_integrate_power_weight(
                |d| Ok((y / (y + d)).powf(dl)),
                s - y,
                mu - 2.0,
                &inner_spec,
            )?;
            total += weight_y_below * above;
        }
        Ok(total)
    };

    let split = t.min(s);
    // Leading small-y behavior of the inner integral is y^{λ−λ′}; the
    // remaining exponents (μ−1 and 2λ′−1 away) are strictly larger.
    let mut value = quad::try_integrate_transformed(
        &inner,
        0.0,
        split,
        Endpoint::PowerLaw(dl),
        if t >= s { Endpoint::PowerLaw(0.0) } else { Endpoint::Smooth },
        spec,
    )?;
    if t > split {
        value += quad::try_integrate_transformed(
            &inner,
            split,
            t,
            Endpoint::PowerLaw(0.0),
            Endpoint::Smooth,
            spec,
        )?;
    }
    Ok(value)
}

/// Variance profile `R(t) = t^{2h(t)} / c²_{h(t)}`, exactly 0 at `t = 0`.
pub fn variance(t: f64, h: &HurstFunction) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("variance time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let lambda = h.eval(t);
    Ok(t.powf(2.0 * lambda) / specfun::norm_const_sq(lambda)?)
}

/// The unnormalized profile `t^{2h(t)}` (no `c⁻²` factor).  Kept as a
/// separate convention because the degenerate example `h(t) = 1/ln t`
/// freezes this profile at `e²` while the normalized one keeps moving; both
/// conventions are exposed so the distinction stays visible downstream.
pub fn variance_unnormalized(t: f64, h: &HurstFunction) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("variance time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    Ok(t.powf(2.0 * h.eval(t)))
}

/// Central finite-difference step for `d(c⁻²_λ)/dλ`.  Fixed and documented:
/// the consumers need ~1e-5 accuracy and this avoids hauling in digamma.
const NORM_CONST_FD_STEP: f64 = 1e-6;

fn norm_const_recip_derivative(lambda: f64) -> Result<f64> {
    let hi = 1.0 / specfun::norm_const_sq(lambda + NORM_CONST_FD_STEP)?;
    let lo = 1.0 / specfun::norm_const_sq(lambda - NORM_CONST_FD_STEP)?;
    Ok((hi - lo) / (2.0 * NORM_CONST_FD_STEP))
}

/// `R′(t) = [2(h′(t) ln t + h(t)/t)·t^{2h(t)}]/c²_{h(t)}
///           + t^{2h(t)}·(d c⁻²/dλ)(h(t))·h′(t)`.
pub fn variance_derivative(t: f64, h: &HurstFunction) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("variance derivative needs t > 0, got {t}")));
    }
    let hp = h.derivative(t).ok_or_else(|| {
        Error::domain("variance derivative needs a differentiable index function")
    })?;
    let lambda = h.eval(t);
    let profile = t.powf(2.0 * lambda);
    let normalized = profile / specfun::norm_const_sq(lambda)?;
    Ok(2.0 * (hp * t.ln() + lambda / t) * normalized
        + profile * norm_const_recip_derivative(lambda)? * hp)
}

/// Derivative of the unnormalized profile:
/// `2(h′(t) ln t + h(t)/t)·t^{2h(t)}`.
pub fn variance_unnormalized_derivative(t: f64, h: &HurstFunction) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("variance derivative needs t > 0, got {t}")));
    }
    let hp = h.derivative(t).ok_or_else(|| {
        Error::domain("variance derivative needs a differentiable index function")
    })?;
    let lambda = h.eval(t);
    Ok(2.0 * (hp * t.ln() + lambda / t) * t.powf(2.0 * lambda))
}

/// `E[(B_h(t) − B_h(s))²]` by the orthogonal decomposition over the shared
/// and fresh noise intervals:
///
/// ```text
/// ∫₀ˢ (K_{h(t)}(t,u) − K_{h(s)}(s,u))² du + ∫ₛᵗ K_{h(t)}(t,u)² du.
/// ```
pub fn increment_second_moment(
    s: f64,
    t: f64,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<f64> {
    check_times(t, s)?;
    if !(s <= t) {
        return Err(Error::domain(format!("increment needs s <= t, got s={s}, t={t}")));
    }
    if s == t {
        return Ok(0.0);
    }
    let lambda_t = h.eval(t);
    let inner_spec = spec.scaled(1e-2);

    let mut total = 0.0;
    if s > 0.0 {
        let lambda_s = h.eval(s);
        total += quad::try_integrate_transformed(
            |u| {
                let kt = kernel::kernel_value(t, u, lambda_t, &inner_spec)?;
                let ks = kernel::kernel_value(s, u, lambda_s, &inner_spec)?;
                let d = kt - ks;
                Ok(d * d)
            },
            0.0,
            s,
            Endpoint::PowerLaw(1.0 - 2.0 * lambda_t.max(lambda_s)),
            Endpoint::PowerLaw(0.0),
            spec,
        )?;
    }
    let left = if s == 0.0 {
        Endpoint::PowerLaw(1.0 - 2.0 * lambda_t)
    } else {
        Endpoint::Smooth
    };
    total += quad::try_integrate_transformed(
        |u| {
            let k = kernel::kernel_value(t, u, lambda_t, &inner_spec)?;
            Ok(k * k)
        },
        s,
        t,
        left,
        Endpoint::PowerLaw(2.0 * lambda_t - 1.0),
        spec,
    )?;
    Ok(total)
}

/// Upper bound for [`increment_second_moment`]:
/// `2·E·|h(t)−h(s)|² + 2·c⁻²_{h(s)}·(t−s)^{2h(s)}`, where `E` is the
/// squared integral of the calibrated index-derivative envelope (see
/// [`DerivativeEnvelope::squared_integral`]).  Splitting the increment at
/// the frozen index `h(s)` and applying `(x+y)² ≤ 2x² + 2y²` gives exactly
/// this form.
pub fn increment_bound(
    s: f64,
    t: f64,
    h: &HurstFunction,
    envelope_energy: f64,
) -> Result<f64> {
    check_times(t, s)?;
    if !(s <= t) {
        return Err(Error::domain(format!("increment needs s <= t, got s={s}, t={t}")));
    }
    if !(envelope_energy >= 0.0) {
        return Err(Error::domain(format!(
            "envelope energy must be nonnegative, got {envelope_energy}"
        )));
    }
    if s == t {
        return Ok(0.0);
    }
    let anchor = if s > 0.0 { s } else { t };
    let lambda_s = h.eval(anchor);
    let dh = h.eval(t) - lambda_s;
    Ok(2.0 * envelope_energy * dh * dh
        + 2.0 * (t - s).powf(2.0 * lambda_s) / specfun::norm_const_sq(lambda_s)?)
}

/// Which route produced a covariance matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovMethod {
    /// Kernel-slice inner product over the shared noise interval.
    KernelProduct,
    /// Beta-weighted double integral.
    BetaIntegral,
    /// Sample covariance of a simulated ensemble.
    Empirical,
}

impl CovMethod {
    pub fn name(self) -> &'static str {
        match self {
            CovMethod::KernelProduct => "kernel-product",
            CovMethod::BetaIntegral => "beta-integral",
            CovMethod::Empirical => "empirical",
        }
    }
}

/// A symmetric covariance matrix over a time grid, tagged with the route
/// that produced it.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    grid: TimeGrid,
    entries: DMatrix<f64>,
    method: CovMethod,
}

impl CovarianceMatrix {
    /// Assemble the matrix entrywise: `entries[i][j]` is the chosen-method
    /// covariance at `(tᵢ, tⱼ, h(tᵢ), h(tⱼ))`.  Rows and columns at `t = 0`
    /// are exact zeros.  The upper triangle is computed concurrently (each
    /// entry is pure) and mirrored.
    pub fn build(
        grid: &TimeGrid,
        h: &HurstFunction,
        method: CovMethod,
        spec: &QuadratureSpec,
    ) -> Result<Self> {
        if method == CovMethod::Empirical {
            return Err(Error::domain(
                "empirical covariance comes from an ensemble, not from quadrature; \
                 use from_parts with sampled data",
            ));
        }
        let times = grid.times();
        let n = times.len();
        let mut pairs = Vec::new();
        for i in 0..n {
            if times[i] == 0.0 {
                continue;
            }
            for j in i..n {
                pairs.push((i, j));
            }
        }
        let computed: Vec<((usize, usize), f64)> = pairs
            .par_iter()
            .map(|&(i, j)| -> Result<((usize, usize), f64)> {
                let (ti, tj) = (times[i], times[j]);
                let (li, lj) = (h.eval(ti), h.eval(tj));
                let v = match method {
                    CovMethod::KernelProduct => cross_cov_kernel_product(ti, tj, li, lj, spec),
                    CovMethod::BetaIntegral => cross_cov_beta_integral(ti, tj, li, lj, spec),
                    CovMethod::Empirical => unreachable!(),
                }
                .map_err(|e| {
                    Error::Tolerance(format!("covariance entry ({i}, {j}) at (t={ti}, s={tj}): {e}"))
                })?;
                Ok(((i, j), v))
            })
            .collect::<Result<_>>()?;
        let mut entries = DMatrix::zeros(n, n);
        for ((i, j), v) in computed {
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
        Ok(Self { grid: grid.clone(), entries, method })
    }

    /// Wrap an externally produced symmetric matrix (e.g. a sample
    /// covariance) with its grid.
    pub fn from_parts(grid: TimeGrid, entries: DMatrix<f64>, method: CovMethod) -> Result<Self> {
        if entries.nrows() != grid.len() || entries.ncols() != grid.len() {
            return Err(Error::domain(format!(
                "matrix is {}x{} but the grid has {} points",
                entries.nrows(),
                entries.ncols(),
                grid.len()
            )));
        }
        Ok(Self { grid, entries, method })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn method(&self) -> CovMethod {
        self.method
    }

    pub fn max_diagonal(&self) -> f64 {
        self.entries.diagonal().iter().cloned().fold(0.0, f64::max)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.entries.nrows() {
            for j in (i + 1)..self.entries.ncols() {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    /// Row-major CSV export; the header row carries the grid times.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
        let header: Vec<String> = self.grid.times().iter().map(|t| t.to_string()).collect();
        w.write_record(&header)
            .map_err(|e| Error::Format(format!("csv header: {e}")))?;
        for i in 0..self.entries.nrows() {
            let row: Vec<String> =
                (0..self.entries.ncols()).map(|j| self.entries[(i, j)].to_string()).collect();
            w.write_record(&row).map_err(|e| Error::Format(format!("csv row {i}: {e}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Covariance of the process increments against a frozen reference point:
/// `E[(B(t₀+εu) − B(t₀))(B(t₀+εv) − B(t₀))]`, assembled from four
/// cross-covariances.  This is the quantity whose `ε^{−2h(t₀)}` rescaling
/// converges to a fractional-Brownian covariance as `ε ↓ 0`.
pub fn increment_cross_cov(
    t0: f64,
    eps: f64,
    u: f64,
    v: f64,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(t0 > 0.0 && eps > 0.0) {
        return Err(Error::domain(format!(
            "increment covariance needs t0 > 0 and eps > 0, got t0={t0}, eps={eps}"
        )));
    }
    let (tu, tv) = (t0 + eps * u, t0 + eps * v);
    if !(tu > 0.0 && tv > 0.0) {
        return Err(Error::domain(format!(
            "shifted times must stay positive, got {tu}, {tv}"
        )));
    }
    let (lu, lv) = (h.eval(tu), h.eval(tv));
    let l0 = h.eval(t0);
    let c_uv = cross_cov_kernel_product(tu, tv, lu, lv, spec)?;
    let c_u0 = cross_cov_kernel_product(tu, t0, lu, l0, spec)?;
    let c_v0 = cross_cov_kernel_product(tv, t0, lv, l0, spec)?;
    let c_00 = variance(t0, h)?;
    Ok(c_uv - c_u0 - c_v0 + c_00)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::DerivativeEnvelope;
    use approx::assert_relative_eq;

    // Frozen 40-digit-oracle values (kernel inner product cross-checked
    // against an independent incomplete-beta reduction of the double
    // integral; both routes agreed to 28 digits).
    const VAR_075: f64 = 13.984306956224638989; // E[X(1,0.75)²] = 1/c²_{0.75}
    const CROSS_PIN: f64 = 16.940661771637273283; // (t,s,λ,λ′) = (1, 0.5, 0.8, 0.6)
    const FBM_COV: f64 = 6.9921534781123194946; // (1, 0.5, 0.75, 0.75)

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn zero_time_short_circuits() {
        let h = HurstFunction::constant(0.75).unwrap();
        assert_eq!(variance(0.0, &h).unwrap(), 0.0);
        assert_eq!(variance_unnormalized(0.0, &h).unwrap(), 0.0);
        assert_eq!(cross_cov_kernel_product(1.0, 0.0, 0.75, 0.75, &spec()).unwrap(), 0.0);
        assert_eq!(cross_cov_beta_integral(0.0, 1.0, 0.75, 0.75, &spec()).unwrap(), 0.0);
    }

    #[test]
    fn variance_closed_form_and_quadrature_agree() {
        let h = HurstFunction::constant(0.75).unwrap();
        let closed = variance(1.0, &h).unwrap();
        assert_relative_eq!(closed, VAR_075, max_relative = 1e-12);

        let by_product = cross_cov_kernel_product(1.0, 1.0, 0.75, 0.75, &spec()).unwrap();
        assert_relative_eq!(by_product, VAR_075, max_relative = 1e-7);

        let by_beta = cross_cov_beta_integral(1.0, 1.0, 0.75, 0.75, &spec()).unwrap();
        assert_relative_eq!(by_beta, VAR_075, max_relative = 1e-6);

        let off_diag = variance(0.7, &h).unwrap();
        let off_diag_q = cross_cov_kernel_product(0.7, 0.7, 0.75, 0.75, &spec()).unwrap();
        assert_relative_eq!(off_diag, off_diag_q, max_relative = 1e-6);
    }

    #[test]
    fn cross_covariance_pinned_and_mutually_consistent() {
        let a = cross_cov_kernel_product(1.0, 0.5, 0.8, 0.6, &spec()).unwrap();
        let b = cross_cov_beta_integral(1.0, 0.5, 0.8, 0.6, &spec()).unwrap();
        assert_relative_eq!(a, CROSS_PIN, max_relative = 1e-6);
        assert_relative_eq!(b, CROSS_PIN, max_relative = 1e-6);
        assert_relative_eq!(a, b, max_relative = 1e-6);
    }

    #[test]
    fn equal_index_matches_fractional_brownian_covariance() {
        let a = cross_cov_kernel_product(1.0, 0.5, 0.75, 0.75, &spec()).unwrap();
        assert_relative_eq!(a, FBM_COV, max_relative = 1e-7);
        let b = cross_cov_beta_integral(1.0, 0.5, 0.75, 0.75, &spec()).unwrap();
        assert_relative_eq!(b, FBM_COV, max_relative = 1e-6);
    }

    #[test]
    fn argument_swap_symmetry() {
        let q = spec();
        let a = cross_cov_kernel_product(1.0, 0.5, 0.8, 0.6, &q).unwrap();
        let b = cross_cov_kernel_product(0.5, 1.0, 0.6, 0.8, &q).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-9);
        let c = cross_cov_beta_integral(1.0, 0.5, 0.8, 0.6, &q).unwrap();
        let d = cross_cov_beta_integral(0.5, 1.0, 0.6, 0.8, &q).unwrap();
        assert_relative_eq!(c, d, max_relative = 1e-7);
    }

    #[test]
    fn variance_derivative_constant_index() {
        let h = HurstFunction::constant(0.75).unwrap();
        let d = variance_derivative(1.0, &h).unwrap();
        let expected = 1.5 / specfun::norm_const_sq(0.75).unwrap();
        assert_relative_eq!(d, expected, max_relative = 1e-12);
        assert!(variance_derivative(0.0, &h).is_err());
    }

    #[test]
    fn variance_derivative_matches_finite_difference() {
        let h = HurstFunction::sinusoidal(0.75, 0.1, 2.0, 0.3).unwrap();
        let t = 0.5;
        let formula = variance_derivative(t, &h).unwrap();
        let delta = 1e-5;
        let fd = (variance(t + delta, &h).unwrap() - variance(t - delta, &h).unwrap())
            / (2.0 * delta);
        assert!(
            (formula - fd).abs() <= 1e-5,
            "formula {formula} vs finite difference {fd}"
        );
    }

    #[test]
    fn table_index_has_no_derivative() {
        let h = HurstFunction::table(vec![0.0, 1.0], vec![0.6, 0.8]).unwrap();
        assert!(variance_derivative(0.5, &h).is_err());
        assert!(variance_unnormalized_derivative(0.5, &h).is_err());
    }

    #[test]
    fn degenerate_profile_freezes_under_unnormalized_convention() {
        let e = std::f64::consts::E;
        let h = HurstFunction::log_reciprocal(e + 0.05, e * e - 0.05).unwrap();
        for i in 0..=20 {
            let t = (e + 0.05) + (e * e - 0.1 - e) * i as f64 / 20.0;
            assert_relative_eq!(
                variance_unnormalized(t, &h).unwrap(),
                e * e,
                max_relative = 1e-12
            );
            assert!(variance_unnormalized_derivative(t, &h).unwrap().abs() <= 1e-12);
        }
        // the normalized profile keeps moving: its derivative is the pure
        // index-drift term and stays well away from zero
        let mid = 0.5 * (e + e * e);
        assert!(variance_derivative(mid, &h).unwrap().abs() > 1e-3);
    }

    #[test]
    fn increment_law_for_constant_index() {
        let h = HurstFunction::constant(0.75).unwrap();
        let q = spec();
        let recip = 1.0 / specfun::norm_const_sq(0.75).unwrap();

        assert_eq!(increment_second_moment(0.4, 0.4, &h, &q).unwrap(), 0.0);

        let m = increment_second_moment(0.3, 0.8, &h, &q).unwrap();
        assert_relative_eq!(m, recip * 0.5_f64.powf(1.5), max_relative = 1e-6);

        let from_zero = increment_second_moment(0.0, 0.7, &h, &q).unwrap();
        assert_relative_eq!(from_zero, recip * 0.7_f64.powf(1.5), max_relative = 1e-6);
    }

    #[test]
    fn increment_bound_dominates() {
        let q = QuadratureSpec::relaxed();
        let h = HurstFunction::sinusoidal(0.75, 0.1, 3.0, 0.0).unwrap();
        let env = DerivativeEnvelope::calibrate(0.65, 0.85, 1.0, &q).unwrap();
        let energy = env.squared_integral(1.0, &q).unwrap();
        // deterministic low-discrepancy-ish sweep of (s, t) pairs
        for k in 0..20 {
            let s = 0.05 + 0.9 * (k as f64 * 0.618_033_988_749_895).fract();
            let t = s + (1.0 - s) * ((k as f64 * 0.324_717_957_244_746).fract() * 0.95 + 0.02);
            let m = increment_second_moment(s, t, &h, &q).unwrap();
            let bound = increment_bound(s, t, &h, energy).unwrap();
            assert!(
                m <= bound * (1.0 + 1e-9),
                "increment moment {m} exceeds bound {bound} at (s={s}, t={t})"
            );
        }
    }

    #[test]
    fn matrix_is_symmetric_psd_with_exact_variance_diagonal() {
        let q = QuadratureSpec::relaxed();
        let grid = TimeGrid::uniform(8, 1.0).unwrap();
        let h = HurstFunction::constant(0.75).unwrap();
        let m = CovarianceMatrix::build(&grid, &h, CovMethod::KernelProduct, &q).unwrap();

        assert_eq!(m.symmetry_defect(), 0.0);
        assert!(m.min_eigenvalue() >= -1e-10 * m.max_diagonal());
        for (i, &t) in grid.times().iter().enumerate() {
            let r = variance(t, &h).unwrap();
            if t == 0.0 {
                assert_eq!(m.entries()[(i, i)], 0.0);
            } else {
                assert_relative_eq!(m.entries()[(i, i)], r, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn matrix_methods_agree_and_match_closed_form() {
        let q = QuadratureSpec::relaxed();
        let grid = TimeGrid::uniform(6, 1.0).unwrap();
        let hs = HurstFunction::sinusoidal(0.75, 0.15, 2.0, 0.4).unwrap();
        let a = CovarianceMatrix::build(&grid, &hs, CovMethod::KernelProduct, &q).unwrap();
        let b = CovarianceMatrix::build(&grid, &hs, CovMethod::BetaIntegral, &q).unwrap();
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                let (x, y) = (a.entries()[(i, j)], b.entries()[(i, j)]);
                if x == 0.0 {
                    assert_eq!(y, 0.0);
                } else {
                    assert!(
                        ((x - y) / x).abs() <= 1e-5,
                        "methods disagree at ({i},{j}): {x} vs {y}"
                    );
                }
            }
        }

        let hc = HurstFunction::constant(0.75).unwrap();
        let c = CovarianceMatrix::build(&grid, &hc, CovMethod::KernelProduct, &q).unwrap();
        let recip = 1.0 / specfun::norm_const_sq(0.75).unwrap();
        for (i, &ti) in grid.times().iter().enumerate() {
            for (j, &tj) in grid.times().iter().enumerate() {
                let closed = 0.5
                    * recip
                    * (ti.powf(1.5) + tj.powf(1.5) - (ti - tj).abs().powf(1.5));
                assert!(
                    (c.entries()[(i, j)] - closed).abs() <= 1e-6,
                    "entry ({i},{j}) = {} vs closed form {closed}",
                    c.entries()[(i, j)]
                );
            }
        }
    }

    #[test]
    fn csv_export_round_trips_header() {
        let q = QuadratureSpec::relaxed();
        let grid = TimeGrid::uniform(4, 1.0).unwrap();
        let h = HurstFunction::constant(0.6).unwrap();
        let m = CovarianceMatrix::build(&grid, &h, CovMethod::KernelProduct, &q).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cov.csv");
        m.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.split(',').count(), 4);
        assert_eq!(lines.count(), 4);
    }

    #[test]
    fn empirical_method_cannot_be_built_by_quadrature() {
        let grid = TimeGrid::uniform(3, 1.0).unwrap();
        let h = HurstFunction::constant(0.75).unwrap();
        assert!(CovarianceMatrix::build(&grid, &h, CovMethod::Empirical, &spec()).is_err());
    }
}
