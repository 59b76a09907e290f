//! Adaptive Gauss–Kronrod quadrature with power-law substitutions.
//!
//! All kernel and covariance integrals in this crate have endpoint
//! singularities of the form `(x-a)^α` with `α ∈ (-1, 1)`.  Plain adaptive
//! bisection converges too slowly when `α` is close to `-1`, so the helpers
//! here first apply a change of variables `x = a + r^p` that removes the
//! power law exactly, then hand the smooth remainder to a 15-point Kronrod
//! rule with worst-interval-first refinement.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Tolerance and budget knobs for one adaptive integration.
///
/// Termination requires the accumulated error estimate to drop below
/// `max(abs_tol, rel_tol * |integral|)`; running out of subdivisions is an
/// error, never a silent partial answer.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !abs_tol.is_finite() {
            return Err(Error::domain(format!("abs_tol must be positive, got {abs_tol}")));
        }
        if !(rel_tol > 0.0) || !rel_tol.is_finite() {
            return Err(Error::domain(format!("rel_tol must be positive, got {rel_tol}")));
        }
        if max_subdivisions < 8 {
            return Err(Error::domain(format!(
                "max_subdivisions must be at least 8, got {max_subdivisions}"
            )));
        }
        Ok(Self { abs_tol, rel_tol, max_subdivisions })
    }

    /// Preset loose enough for statistical estimates where 1% accuracy
    /// suffices and the integrand is expensive.
    pub fn relaxed() -> Self {
        Self { abs_tol: 1e-7, rel_tol: 1e-5, max_subdivisions: 256 }
    }

    /// Scale both tolerances by `factor` (used for integrals nested inside
    /// an outer adaptive pass).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            abs_tol: (self.abs_tol * factor).max(1e-15),
            rel_tol: (self.rel_tol * factor).max(1e-13),
            max_subdivisions: self.max_subdivisions,
        }
    }

    /// Same budget with both tolerances halved; used by convergence tests.
    pub fn halved(&self) -> Self {
        self.scaled(0.5)
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-9, max_subdivisions: 512 }
    }
}

// 15-point Kronrod extension of the 7-point Gauss rule on [-1, 1]
// (QUADPACK dqk15 abscissae and weights).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One Kronrod panel: returns (value, error estimate).
fn gk15<F>(f: &F, a: f64, b: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let fc = f(center)?;
    let mut resg = fc * WG[3];
    let mut resk = fc * WGK[7];
    let mut resabs = fc.abs() * WGK[7];
    let mut fv = [0.0f64; 15];
    fv[7] = fc;

    for j in 0..3 {
        let x = half * XGK[2 * j + 1];
        let f1 = f(center - x)?;
        let f2 = f(center + x)?;
        fv[2 * j + 1] = f1;
        fv[13 - 2 * j] = f2;
        resg += WG[j] * (f1 + f2);
        resk += WGK[2 * j + 1] * (f1 + f2);
        resabs += WGK[2 * j + 1] * (f1.abs() + f2.abs());
    }
    for j in 0..4 {
        let x = half * XGK[2 * j];
        let f1 = f(center - x)?;
        let f2 = f(center + x)?;
        fv[2 * j] = f1;
        fv[14 - 2 * j] = f2;
        resk += WGK[2 * j] * (f1 + f2);
        resabs += WGK[2 * j] * (f1.abs() + f2.abs());
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv[j] - reskh).abs() + (fv[14 - j] - reskh).abs());
    }

    let value = resk * half;
    let resabs = resabs * half.abs();
    let resasc = resasc * half.abs();
    let mut err = ((resk - resg) * half).abs();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    let tiny = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if resabs > tiny {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    Ok((value, err))
}

/// Adaptive integration of a fallible integrand over `[a, b]`.
///
/// The integrand is never evaluated at the endpoints (all Kronrod nodes
/// are interior), so integrable endpoint blow-ups are tolerated as long as
/// the subdivision budget suffices.
pub fn try_integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let (value, err) = gk15(&f, a, b)?;
    if !value.is_finite() {
        return Err(Error::Tolerance(format!(
            "integrand produced a non-finite panel value on [{a}, {b}]"
        )));
    }

    // Worst-first refinement over a flat list of panels; the list stays
    // small (max_subdivisions entries), so a linear scan for the worst
    // panel is cheaper than heap churn.
    let mut panels: Vec<(f64, f64, f64, f64)> = vec![(a, b, value, err)];
    loop {
        let total_val: f64 = panels.iter().map(|p| p.2).sum();
        let total_err: f64 = panels.iter().map(|p| p.3).sum();
        if total_err <= spec.abs_tol.max(spec.rel_tol * total_val.abs()) {
            return Ok(total_val);
        }
        if panels.len() >= spec.max_subdivisions {
            return Err(Error::Tolerance(format!(
                "adaptive quadrature on [{a}, {b}] stalled at error {total_err:.3e} \
                 after {} subdivisions (requested abs {:.1e} / rel {:.1e})",
                panels.len(),
                spec.abs_tol,
                spec.rel_tol
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        let (v1, e1) = gk15(&f, pa, mid)?;
        let (v2, e2) = gk15(&f, mid, pb)?;
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Tolerance(format!(
                "integrand produced a non-finite panel value inside [{a}, {b}]"
            )));
        }
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

/// Adaptive integration of an infallible integrand over `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    try_integrate(|x| Ok(f(x)), a, b, spec)
}

/// `∫₀^len δ^α g(δ) dδ` for `α > -1` and bounded `g`, with the power law
/// removed exactly by `δ = r^p`, `p = 1/(1+α)`:
///
/// ```text
/// ∫₀^len δ^α g(δ) dδ = p ∫₀^{len^{1/p}} g(r^p) dr.
/// ```
///
/// The caller supplies only the bounded factor `g`, so no cancellation of
/// huge-times-tiny products ever happens in floating point.
pub fn try_integrate_power_weight<G>(
    g: G,
    len: f64,
    alpha: f64,
    spec: &QuadratureSpec,
) -> Result<f64>
where
    G: Fn(f64) -> Result<f64>,
{
    if !(alpha > -1.0) {
        return Err(Error::domain(format!("power weight exponent must exceed -1, got {alpha}")));
    }
    if len < 0.0 {
        return Err(Error::domain(format!("integration length must be nonnegative, got {len}")));
    }
    if len == 0.0 {
        return Ok(0.0);
    }
    let p = 1.0 / (1.0 + alpha);
    let r_max = len.powf(1.0 + alpha);
    let val = try_integrate(|r| g(r.powf(p)), 0.0, r_max, spec)?;
    Ok(p * val)
}

pub fn integrate_power_weight<G>(g: G, len: f64, alpha: f64, spec: &QuadratureSpec) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    try_integrate_power_weight(|x| Ok(g(x)), len, alpha, spec)
}

/// Endpoint behavior announcement for [`try_integrate_transformed`]: the
/// integrand behaves like `(distance to endpoint)^α` near that endpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Endpoint {
    Smooth,
    /// `α ∈ (-1, 1)`; negative values are integrable singularities,
    /// positive ones vanishing endpoints with unbounded derivatives.
    PowerLaw(f64),
}

fn transform_exponent(endpoint: Endpoint) -> Result<Option<f64>> {
    match endpoint {
        Endpoint::Smooth => Ok(None),
        Endpoint::PowerLaw(alpha) => {
            if !(alpha > -1.0) {
                return Err(Error::domain(format!(
                    "endpoint power law must exceed -1, got {alpha}"
                )));
            }
            if alpha >= 1.0 {
                // Already C^1 at the endpoint; leave it alone.
                return Ok(None);
            }
            // p = 2/(1+α) maps the leading term to r^1: continuous and
            // vanishing, which adaptive bisection polishes off quickly.
            Ok(Some(2.0 / (1.0 + alpha)))
        }
    }
}

/// Integrate `f` over `[a, b]` where `f` may follow a power law at either
/// endpoint.  The interval is split at its midpoint and each half is mapped
/// by `x = endpoint ± r^p`; unlike [`try_integrate_power_weight`] the full
/// integrand is evaluated as-is, so this works for sums of different powers
/// (covariance integrands) and not just pure products.
pub fn try_integrate_transformed<F>(
    f: F,
    a: f64,
    b: f64,
    left: Endpoint,
    right: Endpoint,
    spec: &QuadratureSpec,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(b >= a) {
        return Err(Error::domain(format!("integration bounds out of order: [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mid = 0.5 * (a + b);
    let half_spec = spec.scaled(0.5);
    let p_left = transform_exponent(left)?;
    let p_right = transform_exponent(right)?;

    let left_val = match p_left {
        None => try_integrate(&f, a, mid, &half_spec)?,
        Some(p) => {
            let r_max = (mid - a).powf(1.0 / p);
            try_integrate(
                |r| {
                    let delta = r.powf(p);
                    let x = a + delta;
                    if x <= a || x >= mid {
                        // Underflow against `a` (or rounding past mid): the
                        // transformed integrand vanishes there.
                        return Ok(0.0);
                    }
                    Ok(f(x)? * p * r.powf(p - 1.0))
                },
                0.0,
                r_max,
                &half_spec,
            )?
        }
    };
    let right_val = match p_right {
        None => try_integrate(&f, mid, b, &half_spec)?,
        Some(p) => {
            let r_max = (b - mid).powf(1.0 / p);
            try_integrate(
                |r| {
                    let delta = r.powf(p);
                    let x = b - delta;
                    if x >= b || x <= mid {
                        return Ok(0.0);
                    }
                    Ok(f(x)? * p * r.powf(p - 1.0))
                },
                0.0,
                r_max,
                &half_spec,
            )?
        }
    };
    Ok(left_val + right_val)
}

pub fn integrate_transformed<F>(
    f: F,
    a: f64,
    b: f64,
    left: Endpoint,
    right: Endpoint,
    spec: &QuadratureSpec,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    try_integrate_transformed(|x| Ok(f(x)), a, b, left, right, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn spec_rejects_bad_knobs() {
        assert!(QuadratureSpec::new(0.0, 1e-9, 100).is_err());
        assert!(QuadratureSpec::new(1e-10, -1.0, 100).is_err());
        assert!(QuadratureSpec::new(1e-10, 1e-9, 7).is_err());
        assert!(QuadratureSpec::new(1e-10, 1e-9, 8).is_ok());
    }

    #[test]
    fn polynomial_is_exact() {
        let spec = QuadratureSpec::default();
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, &spec).unwrap();
        assert_relative_eq!(v, 8.0, max_relative = 1e-13);
    }

    #[test]
    fn oscillatory_integral() {
        let spec = QuadratureSpec::default();
        let v = integrate(|x| (10.0 * x).sin(), 0.0, std::f64::consts::PI, &spec).unwrap();
        // ∫₀^π sin(10x) dx = (1 - cos(10π))/10 = 0
        assert!(v.abs() < 1e-12, "got {v}");
    }

    #[test]
    fn power_weight_matches_closed_form() {
        let spec = QuadratureSpec::default();
        // ∫₀¹ δ^{-0.8} dδ = 1/0.2 = 5
        let v = integrate_power_weight(|_| 1.0, 1.0, -0.8, &spec).unwrap();
        assert_relative_eq!(v, 5.0, max_relative = 1e-12);
        // ∫₀² δ^{-0.5} e^δ dδ, reference value 6.6876855256219744501
        let v = integrate_power_weight(|d: f64| d.exp(), 2.0, -0.5, &spec).unwrap();
        assert_relative_eq!(v, 6.6876855256219744501, max_relative = 1e-9);
    }

    #[test]
    fn log_singularity_converges() {
        let spec = QuadratureSpec::default();
        let v = integrate(|x: f64| x.ln(), 0.0, 1.0, &spec).unwrap();
        assert_relative_eq!(v, -1.0, max_relative = 1e-9);
    }

    #[test]
    fn transformed_handles_both_endpoints() {
        let spec = QuadratureSpec::default();
        // ∫₀¹ x^{-1/2} (1-x)^{-1/2} dx = π
        let f = |x: f64| x.powf(-0.5) * (1.0 - x).powf(-0.5);
        let v = integrate_transformed(
            f,
            0.0,
            1.0,
            Endpoint::PowerLaw(-0.5),
            Endpoint::PowerLaw(-0.5),
            &spec,
        )
        .unwrap();
        assert_relative_eq!(v, std::f64::consts::PI, max_relative = 1e-10);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let tight = QuadratureSpec { abs_tol: 1e-14, rel_tol: 1e-14, max_subdivisions: 8 };
        let r = integrate(|x: f64| x.powf(-0.9), 0.0, 1.0, &tight);
        assert!(matches!(r, Err(Error::Tolerance(_))));
    }

    #[test]
    fn zero_length_is_zero() {
        let spec = QuadratureSpec::default();
        assert_eq!(integrate(|x| x, 1.0, 1.0, &spec).unwrap(), 0.0);
        assert_eq!(integrate_power_weight(|_| 1.0, 0.0, -0.5, &spec).unwrap(), 0.0);
    }
}
