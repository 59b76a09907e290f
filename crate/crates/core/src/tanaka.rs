//! Weighted occupation functionals: the variance-weighted local time that
//! plays the role of the classical local time in the change-of-variable
//! formula for `|B(t) − a|`, its Gaussian-smoothed companion, the exact
//! expectation identity both must satisfy, and the degenerate
//! reciprocal-log index for which the unnormalized variance freezes and
//! the weighted local time vanishes identically.

use crate::covariance;
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::hurst::HurstFunction;
use crate::quad::{self, Endpoint, QuadratureSpec};
use crate::simulate::{self, PathEnsemble};
use crate::analysis::BinGrid;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Which variance curve supplies the `R′` weights.
///
/// The normalized convention differentiates the true process variance
/// `t^{2h(t)}/c²_{h(t)}`; the unnormalized one drops the normalizing
/// constant and differentiates `t^{2h(t)}` alone.  They genuinely disagree
/// for varying index — most starkly for the reciprocal-log index, which
/// freezes the unnormalized curve while the normalized one keeps moving.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceConvention {
    Normalized,
    Unnormalized,
}

impl VarianceConvention {
    pub fn name(self) -> &'static str {
        match self {
            VarianceConvention::Normalized => "normalized",
            VarianceConvention::Unnormalized => "unnormalized",
        }
    }

    fn derivative(self, t: f64, h: &HurstFunction) -> Result<f64> {
        match self {
            VarianceConvention::Normalized => covariance::variance_derivative(t, h),
            VarianceConvention::Unnormalized => {
                covariance::variance_unnormalized_derivative(t, h)
            }
        }
    }
}

/// Precomputed per-cell `R′` weights on a fixed time partition, so that
/// ensemble sweeps do not re-differentiate the variance for every path.
/// Cell `i` spans `[t_i, t_{i+1})` and carries the left-endpoint weight
/// `R′(t_i)`; when the partition starts at 0, where `R′` is undefined, the
/// first cell uses the right endpoint instead.
#[derive(Clone, Debug)]
pub struct VarianceProfile {
    times: Vec<f64>,
    cell_weights: Vec<f64>,
    convention: VarianceConvention,
}

impl VarianceProfile {
    pub fn new(
        times: &[f64],
        h: &HurstFunction,
        convention: VarianceConvention,
    ) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::domain(format!(
                "a weight profile needs at least 2 times, got {}",
                times.len()
            )));
        }
        if !(times[0] >= 0.0) || times.windows(2).any(|w| !(w[1] > w[0] && w[1].is_finite()))
        {
            return Err(Error::domain(
                "profile times must be nonnegative, strictly increasing, and finite",
            ));
        }
        let cell_weights: Vec<f64> = (0..times.len() - 1)
            .into_par_iter()
            .map(|i| {
                let anchor = if times[i] > 0.0 { times[i] } else { times[1] };
                convention.derivative(anchor, h)
            })
            .collect::<Result<_>>()?;
        Ok(Self { times: times.to_vec(), cell_weights, convention })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Weight of cell `i` (left-endpoint `R′`, right endpoint for a cell
    /// starting at 0).
    pub fn cell_weight(&self, i: usize) -> f64 {
        self.cell_weights[i]
    }

    pub fn convention(&self) -> VarianceConvention {
        self.convention
    }
}

fn gauss_pdf(x: f64, var: f64) -> f64 {
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn check_path_against(times: &[f64], values: &[f64]) -> Result<()> {
    if values.len() != times.len() {
        return Err(Error::domain(format!(
            "path has {} values for {} times",
            values.len(),
            times.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("path values must be finite"));
    }
    Ok(())
}

/// Gaussian-smoothed weighted occupation of one path up to time `t`:
/// `Σ_{cells in [0, t]} p_ε(B(t_i) − a) · R′(t_i) · Δt_i` with the profile
/// supplying the `R′` weights.
pub fn smoothed_weighted_occupation_with(
    profile: &VarianceProfile,
    values: &[f64],
    a: f64,
    eps: f64,
    t: f64,
) -> Result<f64> {
    let times = profile.times();
    check_path_against(times, values)?;
    if !(eps > 0.0) {
        return Err(Error::domain(format!("smoothing scale must be positive, got {eps}")));
    }
    if !a.is_finite() || !(t >= times[0]) {
        return Err(Error::domain(format!("evaluation point (a={a}, t={t}) out of range")));
    }
    let mut sum = 0.0;
    for i in 0..times.len() - 1 {
        if times[i + 1] > t {
            break;
        }
        sum += gauss_pdf(values[i] - a, eps)
            * profile.cell_weight(i)
            * (times[i + 1] - times[i]);
    }
    Ok(sum)
}

/// One-shot form of [`smoothed_weighted_occupation_with`] that builds the
/// weight profile for this single path.
pub fn smoothed_weighted_occupation(
    times: &[f64],
    values: &[f64],
    a: f64,
    eps: f64,
    h: &HurstFunction,
    t: f64,
    convention: VarianceConvention,
) -> Result<f64> {
    let profile = VarianceProfile::new(times, h, convention)?;
    smoothed_weighted_occupation_with(&profile, values, a, eps, t)
}

/// Variance-weighted local time of one path at level `a`: cumulative
/// Stieltjes sums `Σ R′(τ_k)·ΔL̂(bin(a))` over the checkpoint increments
/// of the binned occupation density.
#[derive(Clone, Debug)]
pub struct WeightedLocalTime {
    a: f64,
    checkpoints: Vec<f64>,
    values: Vec<f64>,
    convention: VarianceConvention,
}

impl WeightedLocalTime {
    pub fn level(&self) -> f64 {
        self.a
    }

    pub fn checkpoints(&self) -> &[f64] {
        &self.checkpoints
    }

    /// Cumulative weighted local time at each checkpoint.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value over the whole observed window.
    pub fn total(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn convention(&self) -> VarianceConvention {
        self.convention
    }
}

/// Weighted local time from a precomputed profile whose times are the
/// checkpoints: occupation of the bin containing `a` accrued over each
/// cell, weighted by the cell's `R′`.
pub fn weighted_local_time_with(
    profile: &VarianceProfile,
    values: &[f64],
    a: f64,
    bins: &BinGrid,
) -> Result<WeightedLocalTime> {
    let times = profile.times();
    check_path_against(times, values)?;
    let target = bins.index_of(a).ok_or_else(|| {
        Error::domain(format!(
            "level {a} falls outside the binned range [{}, {})",
            bins.lo(),
            bins.hi()
        ))
    })?;
    let mut cumulative = Vec::with_capacity(times.len());
    cumulative.push(0.0);
    let mut acc = 0.0;
    for i in 0..times.len() - 1 {
        let bin = bins.index_of(values[i]).ok_or_else(|| {
            Error::domain(format!(
                "path value {} at time {} falls outside the binned range [{}, {})",
                values[i],
                times[i],
                bins.lo(),
                bins.hi()
            ))
        })?;
        if bin == target {
            let dl = (times[i + 1] - times[i]) / bins.width();
            acc += profile.cell_weight(i) * dl;
        }
        cumulative.push(acc);
    }
    Ok(WeightedLocalTime {
        a,
        checkpoints: times.to_vec(),
        values: cumulative,
        convention: profile.convention(),
    })
}

/// One-shot form of [`weighted_local_time_with`]: the checkpoints are the
/// path times themselves.
pub fn weighted_local_time(
    times: &[f64],
    values: &[f64],
    a: f64,
    h: &HurstFunction,
    bins: &BinGrid,
    convention: VarianceConvention,
) -> Result<WeightedLocalTime> {
    let profile = VarianceProfile::new(times, h, convention)?;
    weighted_local_time_with(&profile, values, a, bins)
}

/// Exact expectation of the smoothed weighted occupation:
/// `∫₀ᵗ p_{R(s)+ε}(a) · R′(s) ds` by adaptive quadrature (for centered
/// Gaussian marginals, `E[p_ε(B(s) − a)] = p_{R(s)+ε}(a)` exactly, with
/// `R` always the true process variance).  The weight `R′` follows the
/// selected convention.
pub fn deterministic_weighted_occupation(
    h: &HurstFunction,
    a: f64,
    eps: f64,
    t: f64,
    convention: VarianceConvention,
    spec: &QuadratureSpec,
) -> Result<f64> {
    if !(eps > 0.0) || !(t >= 0.0) || !a.is_finite() || !t.is_finite() {
        return Err(Error::domain(format!(
            "deterministic occupation needs eps > 0 and t >= 0, got eps={eps}, t={t}, a={a}"
        )));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    // R′ behaves like s^{2h(0)-1} near 0: integrable, not C¹
    let edge_exponent = 2.0 * h.eval(t.min(1e-3 * t)) - 1.0;
    quad::try_integrate_transformed(
        |s| {
            if s <= 0.0 {
                return Ok(0.0);
            }
            let var = covariance::variance(s, h)?;
            let weight = convention.derivative(s, h)?;
            Ok(gauss_pdf(a, var + eps) * weight)
        },
        0.0,
        t,
        Endpoint::PowerLaw(edge_exponent),
        Endpoint::Smooth,
        spec,
    )
}

/// Monte Carlo check of the expectation identity for the smoothed weighted
/// occupation at one `(a, ε, t)` triple.
#[derive(Clone, Debug, Serialize)]
pub struct ExpectationCheck {
    pub a: f64,
    pub eps: f64,
    pub t: f64,
    pub mc_mean: f64,
    pub mc_se: f64,
    pub deterministic: f64,
    pub pass: bool,
}

/// Time grid for weighted-occupation sums: `n_cells` uniform cells on
/// `[0, t]`, with the first cell geometrically refined toward 0 where the
/// integrand's integrable singularity would otherwise bias left-endpoint
/// sums.
pub fn tanaka_grid(t: f64, n_cells: usize) -> Result<TimeGrid> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!("horizon must be positive, got {t}")));
    }
    if n_cells < 16 {
        return Err(Error::domain(format!("at least 16 cells are required, got {n_cells}")));
    }
    let delta = t / n_cells as f64;
    let mut times = vec![0.0];
    for k in (0..=6).rev() {
        times.push(delta / (1u64 << k) as f64);
    }
    for i in 2..=n_cells {
        times.push(i as f64 * delta);
    }
    TimeGrid::from_times(times)
}

/// Default cell count for [`tanaka_grid`] in the self-contained identity
/// check.
pub const TANAKA_DEFAULT_CELLS: usize = 512;

/// Expectation identity on an existing ensemble: the ensemble average of
/// the smoothed weighted occupation against its exact expectation, with a
/// `3·SE` verdict.  Always uses the normalized convention — the identity
/// equates a path statistic with the law of the process, so the weight
/// must differentiate the true variance.
pub fn expectation_identity_on(
    ens: &PathEnsemble,
    h: &HurstFunction,
    a: f64,
    eps: f64,
    t: f64,
    spec: &QuadratureSpec,
) -> Result<ExpectationCheck> {
    if !(t > 0.0) || t > ens.grid().horizon() {
        return Err(Error::domain(format!(
            "evaluation time {t} outside the ensemble horizon {}",
            ens.grid().horizon()
        )));
    }
    let profile =
        VarianceProfile::new(ens.grid().times(), h, VarianceConvention::Normalized)?;
    let n = ens.n_paths();
    let per_path: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|p| {
            let row = ens.path(p);
            smoothed_weighted_occupation_with(&profile, &row, a, eps, t)
        })
        .collect::<Result<_>>()?;
    let mean = per_path.iter().sum::<f64>() / n as f64;
    let var = per_path.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (n as f64 - 1.0);
    let se = (var / n as f64).sqrt();
    let deterministic =
        deterministic_weighted_occupation(h, a, eps, t, VarianceConvention::Normalized, spec)?;
    let pass = (mean - deterministic).abs() <= 3.0 * se;
    Ok(ExpectationCheck { a, eps, t, mc_mean: mean, mc_se: se, deterministic, pass })
}

/// Self-contained expectation-identity check: samples `n_paths` exact
/// Gaussian paths on a [`tanaka_grid`] over `[0, t]` and compares the
/// ensemble mean of the smoothed weighted occupation with its exact
/// expectation.
pub fn tanaka_expectation_identity(
    h: &HurstFunction,
    a: f64,
    eps: f64,
    t: f64,
    n_paths: usize,
    seed: simulate::RandomSeed,
    spec: &QuadratureSpec,
) -> Result<ExpectationCheck> {
    let grid = tanaka_grid(t, TANAKA_DEFAULT_CELLS)?;
    let ens = simulate::sample_cholesky(&grid, h, n_paths, seed, spec)?;
    expectation_identity_on(&ens, h, a, eps, t, spec)
}

/// Findings for the reciprocal-log index on an interval `[s, t]` inside
/// `(e, e²)`: the unnormalized variance `u^{2h(u)}` is constant there (so
/// its derivative — and with it the unnormalized weighted local time —
/// vanishes), while the normalized variance keeps a nonzero slope.
#[derive(Clone, Debug, Serialize)]
pub struct DegenerateProfileReport {
    pub interval: (f64, f64),
    /// Largest relative deviation of `u^{2h(u)}` from `e²` on the lattice.
    pub max_constant_rel_dev: f64,
    /// Largest `|R′|` under the unnormalized convention (formula and
    /// central finite difference both sampled).
    pub max_unnormalized_derivative: f64,
    /// Largest `|R′|` under the normalized convention.
    pub max_normalized_derivative: f64,
    /// Unnormalized curve is flat to 1e-10.
    pub degenerate: bool,
    /// Normalized curve moves by more than 1e-3 somewhere.
    pub normalized_varies: bool,
}

/// Examine the degenerate reciprocal-log index on `[s, t] ⊂ (e, e²)`.
pub fn degenerate_profile_case(s: f64, t: f64) -> Result<DegenerateProfileReport> {
    let e = std::f64::consts::E;
    let e2 = e * e;
    if !(e < s && s < t && t < e2) {
        return Err(Error::domain(format!(
            "the degenerate index needs an interval inside ({e}, {e2}), got [{s}, {t}]"
        )));
    }
    let h = HurstFunction::log_reciprocal(s, t)?;
    let e_sq = e2;
    let n = 101;
    let mut max_dev = 0.0_f64;
    let mut max_unnorm = 0.0_f64;
    let mut max_norm = 0.0_f64;
    let fd_step = 1e-4;
    for j in 0..n {
        let u = s + (t - s) * j as f64 / (n - 1) as f64;
        let ru = covariance::variance_unnormalized(u, &h)?;
        max_dev = max_dev.max((ru - e_sq).abs() / e_sq);
        max_unnorm = max_unnorm.max(covariance::variance_unnormalized_derivative(u, &h)?.abs());
        // central finite difference, kept inside the interval
        let du = fd_step * u;
        if u - du > s && u + du < t {
            let hi = covariance::variance_unnormalized(u + du, &h)?;
            let lo = covariance::variance_unnormalized(u - du, &h)?;
            max_unnorm = max_unnorm.max(((hi - lo) / (2.0 * du)).abs());
        }
        max_norm = max_norm.max(covariance::variance_derivative(u, &h)?.abs());
    }
    Ok(DegenerateProfileReport {
        interval: (s, t),
        max_constant_rel_dev: max_dev,
        max_unnormalized_derivative: max_unnorm,
        max_normalized_derivative: max_norm,
        degenerate: max_dev <= 1e-10 && max_unnorm <= 1e-10,
        normalized_varies: max_norm > 1e-3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::RandomSeed;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    // Frozen 40-digit-oracle values: ∫₀¹ p_{R(s)+ε}(0) dR(s) for constant
    // index 3/4, via the closed form √(2/π)(√(R(1)+ε) − √ε).
    const DET_EPS2: f64 = 2.9050151402914730313; // ε = 1e-2
    const DET_EPS3: f64 = 2.9586123253356517647; // ε = 1e-3

    fn h075() -> HurstFunction {
        HurstFunction::constant(0.75).unwrap()
    }

    fn synthetic_path(times: &[f64], seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut x = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for i in 0..times.len() {
            out.push(x);
            if i + 1 < times.len() {
                let dt: f64 = times[i + 1] - times[i];
                x += scale * dt.powf(0.75) * rng.sample::<f64, _>(StandardNormal);
            }
        }
        out
    }

    #[test]
    fn profile_uses_right_endpoint_for_the_zero_cell() {
        let times = [0.0, 0.25, 0.5, 1.0];
        let p =
            VarianceProfile::new(&times, &h075(), VarianceConvention::Normalized).unwrap();
        let at = |t: f64| covariance::variance_derivative(t, &h075()).unwrap();
        assert_relative_eq!(p.cell_weight(0), at(0.25), max_relative = 1e-13);
        assert_relative_eq!(p.cell_weight(1), at(0.25), max_relative = 1e-13);
        assert_relative_eq!(p.cell_weight(2), at(0.5), max_relative = 1e-13);
    }

    #[test]
    fn smoothed_occupation_of_flat_path_matches_variance() {
        // B ≡ 0 at a = 0: the Gaussian factor is constant, so the sum is a
        // left-endpoint Riemann sum of R′ — the variance itself.
        let grid = tanaka_grid(1.0, 512).unwrap();
        let times = grid.times();
        let zeros = vec![0.0; times.len()];
        let eps = 0.04;
        let v = smoothed_weighted_occupation(
            times,
            &zeros,
            0.0,
            eps,
            &h075(),
            1.0,
            VarianceConvention::Normalized,
        )
        .unwrap();
        let r1 = covariance::variance(1.0, &h075()).unwrap();
        let expect = r1 / (2.0 * std::f64::consts::PI * eps).sqrt();
        assert_relative_eq!(v, expect, max_relative = 5e-3);

        // a level far outside the path range is invisible
        let far = smoothed_weighted_occupation(
            times,
            &zeros,
            10.0 * eps.sqrt() + 1.0,
            eps,
            &h075(),
            1.0,
            VarianceConvention::Normalized,
        )
        .unwrap();
        assert!(far < 1e-8 * v, "far level {far}");
    }

    #[test]
    fn smoothed_occupation_converges_toward_weighted_local_time() {
        let grid = tanaka_grid(1.0, 2048).unwrap();
        let times = grid.times();
        let values = synthetic_path(times, 7, 1.0);
        let profile =
            VarianceProfile::new(times, &h075(), VarianceConvention::Normalized).unwrap();
        let bins = BinGrid::freedman_diaconis(&values).unwrap();
        let a = bins.centers()[bins.index_of(values[times.len() / 2]).unwrap()];

        let direct = weighted_local_time_with(&profile, &values, a, &bins).unwrap().total();
        let mut prev_gap = f64::INFINITY;
        let mut last = f64::NAN;
        for eps in [1e-2, 1e-3, 1e-4] {
            let v =
                smoothed_weighted_occupation_with(&profile, &values, a, eps, 1.0).unwrap();
            let gap = (v - direct).abs();
            assert!(gap <= prev_gap * 1.5, "smoothing gap grew: {gap} after {prev_gap}");
            prev_gap = gap;
            last = v;
        }
        let rel = (last - direct).abs() / direct.abs().max(1e-12);
        assert!(rel <= 0.3, "smoothed {last} vs binned {direct} (rel {rel})");
    }

    #[test]
    fn weighted_local_time_is_monotone_when_variance_grows() {
        let grid = tanaka_grid(1.0, 1024).unwrap();
        let times = grid.times();
        let values = synthetic_path(times, 11, 1.0);
        let bins = BinGrid::freedman_diaconis(&values).unwrap();
        let profile =
            VarianceProfile::new(times, &h075(), VarianceConvention::Normalized).unwrap();
        // constant index: R is strictly increasing, so every increment of
        // the weighted local time is nonnegative at every level
        for &a in bins.centers().iter().step_by(3) {
            let wlt = weighted_local_time_with(&profile, &values, a, &bins).unwrap();
            assert!(wlt
                .values()
                .windows(2)
                .all(|w| w[1] - w[0] >= -1e-12));
            assert!(wlt.total() >= 0.0);
        }
        // a level outside the bins is a range error
        assert!(weighted_local_time_with(&profile, &values, bins.hi() + 1.0, &bins).is_err());
    }

    #[test]
    fn degenerate_index_freezes_the_unnormalized_weights() {
        let e = std::f64::consts::E;
        let (s, t) = (e + 0.1, e * e - 0.5);
        let h = HurstFunction::log_reciprocal(s, t).unwrap();
        let times: Vec<f64> = (0..257).map(|i| s + (t - s) * i as f64 / 256.0).collect();
        let values = synthetic_path(&times, 3, 1.0);
        let bins = BinGrid::freedman_diaconis(&values).unwrap();

        let frozen = VarianceProfile::new(&times, &h, VarianceConvention::Unnormalized).unwrap();
        let moving = VarianceProfile::new(&times, &h, VarianceConvention::Normalized).unwrap();
        let mut any_moving = 0.0_f64;
        for &a in bins.centers().iter() {
            let dead = weighted_local_time_with(&frozen, &values, a, &bins).unwrap();
            assert!(
                dead.values().iter().all(|v| v.abs() <= 1e-12),
                "unnormalized weighted local time should vanish, got {}",
                dead.total()
            );
            let alive = weighted_local_time_with(&moving, &values, a, &bins).unwrap();
            any_moving = any_moving.max(alive.total().abs());
        }
        assert!(any_moving > 1e-3, "normalized weights should not vanish: {any_moving}");
    }

    #[test]
    fn degenerate_profile_report_flags_the_degeneracy() {
        let e = std::f64::consts::E;
        let rep = degenerate_profile_case(e + 0.05, e * e - 0.05).unwrap();
        assert!(rep.degenerate, "flat check failed: {rep:?}");
        assert!(rep.normalized_varies, "normalized slope check failed: {rep:?}");
        assert!(rep.max_constant_rel_dev <= 1e-10);
        assert!(rep.max_unnormalized_derivative <= 1e-10);
        assert!(rep.max_normalized_derivative > 1e-3);
        assert!(degenerate_profile_case(1.0, 2.0).is_err());
        assert!(degenerate_profile_case(e + 0.5, e + 0.2).is_err());
    }

    #[test]
    fn deterministic_side_matches_closed_form_pins() {
        let q = QuadratureSpec::default();
        let h = h075();
        let v2 = deterministic_weighted_occupation(
            &h,
            0.0,
            1e-2,
            1.0,
            VarianceConvention::Normalized,
            &q,
        )
        .unwrap();
        assert_relative_eq!(v2, DET_EPS2, max_relative = 1e-6);
        let v3 = deterministic_weighted_occupation(
            &h,
            0.0,
            1e-3,
            1.0,
            VarianceConvention::Normalized,
            &q,
        )
        .unwrap();
        assert_relative_eq!(v3, DET_EPS3, max_relative = 1e-6);
        // t → 0 washout
        let tiny = deterministic_weighted_occupation(
            &h,
            0.0,
            1e-2,
            1e-4,
            VarianceConvention::Normalized,
            &q,
        )
        .unwrap();
        assert!(tiny < 1e-4, "short-horizon value {tiny}");
        assert_eq!(
            deterministic_weighted_occupation(
                &h,
                0.0,
                1e-2,
                0.0,
                VarianceConvention::Normalized,
                &q
            )
            .unwrap(),
            0.0
        );
    }

    #[test]
    fn expectation_identity_with_dominant_smoothing() {
        // large ε makes the Gaussian factor nearly constant, which shrinks
        // the Monte Carlo spread; the time grid must then be fine enough
        // that the left-endpoint occupation sums track the integral below
        // that spread.  Constant index has a closed-form covariance, so a
        // fine grid costs nothing to build.
        let q = QuadratureSpec::default();
        let h = h075();
        let t = 0.5;
        let grid = tanaka_grid(t, 2048).unwrap();
        let c2 = crate::specfun::norm_const_sq(0.75).unwrap();
        let times = grid.times();
        let n = times.len();
        let mut cov = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let (s, u) = (times[i], times[j]);
                cov[(i, j)] =
                    (s.powf(1.5) + u.powf(1.5) - (s - u).abs().powf(1.5)) / (2.0 * c2);
            }
        }
        let cm = covariance::CovarianceMatrix::from_parts(
            grid,
            cov,
            covariance::CovMethod::KernelProduct,
        )
        .unwrap();
        let ens = simulate::sample_from_covariance(&cm, 48, RandomSeed::new(404)).unwrap();
        let r_t = covariance::variance(t, &h).unwrap();
        let eps = 100.0 * r_t;
        let check = expectation_identity_on(&ens, &h, 0.0, eps, t, &q).unwrap();
        assert!(
            check.pass,
            "|{} - {}| > 3·{}",
            check.mc_mean, check.deterministic, check.mc_se
        );
        let washed = r_t / (2.0 * std::f64::consts::PI * eps).sqrt();
        assert_relative_eq!(check.deterministic, washed, max_relative = 1e-2);
    }
}
