//! Gamma, beta, and the variance normalization constant.
//!
//! The normalization constant ties the kernel to the marginal variance law
//! `E[X(t,λ)²] = t^{2λ}/c_λ²`; everything downstream (covariance scaling,
//! local-time normalizations, the Tanaka deterministic side) funnels
//! through it, so it gets two algebraically independent evaluation routes
//! and an identity test between them.

use crate::error::{Error, Result};

// Lanczos approximation, g = 607/128, 15 terms (Godfrey's coefficient
// set).  Relative error of the rational part is below 1e-15 on the
// half-plane Re z > 0, comfortably inside the 1e-12 budget for Γ on (0,50].
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS_COEFF: [f64; 15] = [
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
];

fn lanczos_series(x: f64) -> f64 {
    let mut acc = LANCZOS_COEFF[0];
    for (k, c) in LANCZOS_COEFF.iter().enumerate().skip(1) {
        acc += c / (x - 1.0 + k as f64);
    }
    acc
}

fn check_positive(x: f64, what: &str) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("{what} must be a positive finite real, got {x}")));
    }
    Ok(())
}

/// Γ(x) for positive real x.  Overflows f64 past x ≈ 171.6, which is
/// rejected rather than returned as infinity.
pub fn gamma(x: f64) -> Result<f64> {
    check_positive(x, "gamma argument")?;
    if x > 171.6 {
        return Err(Error::domain(format!("gamma({x}) overflows f64; use ln_gamma")));
    }
    if x < 0.5 {
        // Reflection keeps the Lanczos argument away from the pole side.
        let s = (std::f64::consts::PI * x).sin();
        return Ok(std::f64::consts::PI / (s * gamma(1.0 - x)?));
    }
    let t = x + LANCZOS_G - 0.5;
    let sqrt_two_pi = (2.0 * std::f64::consts::PI).sqrt();
    Ok(sqrt_two_pi * t.powf(x - 0.5) * (-t).exp() * lanczos_series(x))
}

/// ln Γ(x) for positive real x.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check_positive(x, "ln_gamma argument")?;
    if x < 0.5 {
        let s = (std::f64::consts::PI * x).sin();
        return Ok(std::f64::consts::PI.ln() - s.ln() - ln_gamma(1.0 - x)?);
    }
    let t = x + LANCZOS_G - 0.5;
    let half_ln_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    Ok(half_ln_two_pi + (x - 0.5) * t.ln() - t + lanczos_series(x).ln())
}

/// Euler beta `B(p,q) = Γ(p)Γ(q)/Γ(p+q)` for positive p, q.
///
/// Evaluated as a plain product for moderate arguments (which makes
/// `beta(p,q) == beta(q,p)` exact in floating point) and through `ln_gamma`
/// when Γ(p+q) would overflow.
pub fn beta(p: f64, q: f64) -> Result<f64> {
    check_positive(p, "beta argument p")?;
    check_positive(q, "beta argument q")?;
    if p + q <= 171.6 {
        Ok(gamma(p)? * gamma(q)? / gamma(p + q)?)
    } else {
        Ok((ln_gamma(p)? + ln_gamma(q)? - ln_gamma(p + q)?).exp())
    }
}

/// How close to the ends of (1/2, 1) the normalization constant is still
/// evaluated; inside that margin the Γ/sin factors lose all precision.
pub const NORM_CONST_MARGIN: f64 = 1e-6;

/// The squared variance normalization constant
///
/// ```text
/// c_λ² = 2π λ (λ-1/2)³ / ( Γ(2-2λ) Γ(λ+1/2)² sin(π(λ-1/2)) ),
/// ```
///
/// defined for λ ∈ (1/2, 1); arguments within `NORM_CONST_MARGIN` of either
/// endpoint are rejected.
pub fn norm_const_sq(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda - 0.5 < NORM_CONST_MARGIN || 1.0 - lambda < NORM_CONST_MARGIN
    {
        return Err(Error::domain(format!(
            "normalization constant needs λ in (1/2, 1) with margin {NORM_CONST_MARGIN}, got {lambda}"
        )));
    }
    let shifted = lambda - 0.5;
    let num = 2.0 * std::f64::consts::PI * lambda * shifted.powi(3);
    let den = gamma(2.0 - 2.0 * lambda)?
        * gamma(lambda + 0.5)?.powi(2)
        * (std::f64::consts::PI * shifted).sin();
    Ok(num / den)
}

/// Independent route to `1/c_λ²` through the beta function:
/// `c_λ^{-2} = B(2-2λ, λ-1/2) / (λ(2λ-1))`.
///
/// Used as the cross-check oracle for [`norm_const_sq`]; production code
/// should pick one route and stay with it.
pub fn norm_const_sq_recip_via_beta(lambda: f64) -> Result<f64> {
    if !lambda.is_finite() || lambda - 0.5 < NORM_CONST_MARGIN || 1.0 - lambda < NORM_CONST_MARGIN
    {
        return Err(Error::domain(format!(
            "normalization constant needs λ in (1/2, 1) with margin {NORM_CONST_MARGIN}, got {lambda}"
        )));
    }
    Ok(beta(2.0 - 2.0 * lambda, lambda - 0.5)? / (lambda * (2.0 * lambda - 1.0)))
}
