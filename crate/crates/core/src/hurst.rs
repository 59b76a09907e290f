//! Time-varying regularity index functions `h : ℝ → [a, b] ⊂ (1/2, 1)`.
//!
//! Every shape shipped here is Lipschitz, so the declared Hölder exponent
//! is 1 and the standing requirement `sup h < β` reduces to `b < 1`, which
//! the constructors enforce.  Table-interpolated shapes deliberately do not
//! expose a derivative: the interpolant is differentiable, but treating the
//! derivative of fitted data as meaningful invites silent nonsense in the
//! weighted-local-time computations that consume it.

use crate::error::{Error, Result};

const E: f64 = std::f64::consts::E;

#[derive(Clone, Debug)]
enum Shape {
    Constant {
        value: f64,
    },
    AffineClamped {
        intercept: f64,
        slope: f64,
    },
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    Table {
        times: Vec<f64>,
        values: Vec<f64>,
        tangents: Vec<f64>,
    },
    /// `h(t) = 1/ln t`, restricted to a closed subinterval of `(e, e²)`.
    /// On it `t^{2h(t)} ≡ e²`, the degenerate case of the weighted local
    /// time under the unnormalized variance convention.
    LogReciprocal {
        t_lo: f64,
        t_hi: f64,
    },
}

#[derive(Clone, Debug)]
pub struct HurstFunction {
    shape: Shape,
    lo: f64,
    hi: f64,
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if !(0.5 < lo && lo <= hi && hi < 1.0) {
        return Err(Error::domain(format!(
            "index range must satisfy 1/2 < a <= b < 1, got [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl HurstFunction {
    pub fn constant(value: f64) -> Result<Self> {
        check_range(value, value)?;
        Ok(Self { shape: Shape::Constant { value }, lo: value, hi: value })
    }

    /// `h(t) = clamp(intercept + slope·t, lo, hi)`.
    pub fn affine_clamped(intercept: f64, slope: f64, lo: f64, hi: f64) -> Result<Self> {
        check_range(lo, hi)?;
        if lo == hi {
            return Err(Error::domain(
                "affine clamp window must have lo < hi; use a constant shape instead",
            ));
        }
        if !slope.is_finite() || !intercept.is_finite() {
            return Err(Error::domain("affine parameters must be finite"));
        }
        Ok(Self { shape: Shape::AffineClamped { intercept, slope }, lo, hi })
    }

    /// `h(t) = mean + amplitude·sin(omega·t + phase)` with
    /// `mean ± amplitude ⊂ (1/2, 1)`.
    pub fn sinusoidal(mean: f64, amplitude: f64, omega: f64, phase: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::domain(format!(
                "sinusoidal amplitude must be nonnegative, got {amplitude}"
            )));
        }
        if !omega.is_finite() || !phase.is_finite() {
            return Err(Error::domain("sinusoidal frequency and phase must be finite"));
        }
        let lo = mean - amplitude;
        let hi = mean + amplitude;
        check_range(lo, hi)?;
        Ok(Self { shape: Shape::Sinusoidal { mean, amplitude, omega, phase }, lo, hi })
    }

    /// Monotonicity-preserving cubic (Fritsch–Carlson) through the given
    /// nodes, extended as a constant outside the table range.  The
    /// interpolant never overshoots the data, so the data range is the
    /// function range.
    pub fn table(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::domain(format!(
                "table needs >= 2 nodes with matching lengths, got {} times / {} values",
                times.len(),
                values.len()
            )));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::domain(format!(
                    "table times must be strictly increasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        check_range(lo, hi)?;
        let tangents = fritsch_carlson_tangents(&times, &values);
        Ok(Self { shape: Shape::Table { times, values, tangents }, lo, hi })
    }

    /// `h(t) = 1/ln t` on `[t_lo, t_hi] ⊂ (e, e²)`.
    pub fn log_reciprocal(t_lo: f64, t_hi: f64) -> Result<Self> {
        if !(E < t_lo && t_lo < t_hi && t_hi < E * E) {
            return Err(Error::domain(format!(
                "log-reciprocal domain must satisfy e < t_lo < t_hi < e^2, got [{t_lo}, {t_hi}]"
            )));
        }
        let lo = 1.0 / t_hi.ln();
        let hi = 1.0 / t_lo.ln();
        check_range(lo, hi)?;
        Ok(Self { shape: Shape::LogReciprocal { t_lo, t_hi }, lo, hi })
    }

    /// Evaluate `h(t)`.  The range invariant `a ≤ h(t) ≤ b` is asserted on
    /// every call (with a 1e-12 rounding allowance for the interpolated
    /// shape); a violation is a bug, not a recoverable condition.
    pub fn eval(&self, t: f64) -> f64 {
        let v = match &self.shape {
            Shape::Constant { value } => *value,
            Shape::AffineClamped { intercept, slope } => {
                (intercept + slope * t).clamp(self.lo, self.hi)
            }
            Shape::Sinusoidal { mean, amplitude, omega, phase } => {
                mean + amplitude * (omega * t + phase).sin()
            }
            Shape::Table { times, values, tangents } => {
                eval_hermite(times, values, tangents, t)
            }
            Shape::LogReciprocal { t_lo, t_hi } => {
                assert!(
                    (*t_lo..=*t_hi).contains(&t),
                    "log-reciprocal index evaluated at t={t} outside [{t_lo}, {t_hi}]"
                );
                1.0 / t.ln()
            }
        };
        assert!(
            v >= self.lo - 1e-12 && v <= self.hi + 1e-12,
            "index value {v} escaped declared range [{}, {}] at t={t}",
            self.lo,
            self.hi
        );
        v.clamp(self.lo, self.hi)
    }

    /// Derivative `h'(t)` where the shape supports one; `None` for
    /// table-interpolated shapes.
    pub fn derivative(&self, t: f64) -> Option<f64> {
        match &self.shape {
            Shape::Constant { .. } => Some(0.0),
            Shape::AffineClamped { intercept, slope } => {
                let raw = intercept + slope * t;
                if raw > self.lo && raw < self.hi {
                    Some(*slope)
                } else {
                    Some(0.0)
                }
            }
            Shape::Sinusoidal { amplitude, omega, phase, .. } => {
                Some(amplitude * omega * (omega * t + phase).cos())
            }
            Shape::Table { .. } => None,
            Shape::LogReciprocal { .. } => {
                let ln_t = t.ln();
                Some(-1.0 / (t * ln_t * ln_t))
            }
        }
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self.shape, Shape::Table { .. })
    }

    /// Lower range bound `a`.
    pub fn lo(&self) -> f64 {
        self.lo
    }

    /// Upper range bound `b`.
    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Hölder exponent β declared for the shape (1: all shipped shapes are
    /// Lipschitz).  The theory requires `sup h < β`, i.e. `b < 1`.
    pub fn holder_exponent(&self) -> f64 {
        1.0
    }

    pub fn shape_name(&self) -> &'static str {
        match self.shape {
            Shape::Constant { .. } => "constant",
            Shape::AffineClamped { .. } => "affine-clamped",
            Shape::Sinusoidal { .. } => "sinusoidal",
            Shape::Table { .. } => "table",
            Shape::LogReciprocal { .. } => "log-reciprocal",
        }
    }

    /// Total variation of `h` along an ordered sequence of times.
    pub fn variation_along(&self, times: &[f64]) -> f64 {
        times
            .windows(2)
            .map(|w| (self.eval(w[1]) - self.eval(w[0])).abs())
            .sum()
    }
}

fn fritsch_carlson_tangents(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut secants = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        secants.push((values[k + 1] - values[k]) / (times[k + 1] - times[k]));
    }
    let mut m = vec![0.0; n];
    m[0] = secants[0];
    m[n - 1] = secants[n - 2];
    for k in 1..n - 1 {
        if secants[k - 1] * secants[k] <= 0.0 {
            m[k] = 0.0;
        } else {
            m[k] = 0.5 * (secants[k - 1] + secants[k]);
        }
    }
    for k in 0..n - 1 {
        if secants[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let alpha = m[k] / secants[k];
        let beta = m[k + 1] / secants[k];
        let s = alpha * alpha + beta * beta;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[k] = tau * alpha * secants[k];
            m[k + 1] = tau * beta * secants[k];
        }
    }
    m
}

fn eval_hermite(times: &[f64], values: &[f64], tangents: &[f64], t: f64) -> f64 {
    let n = times.len();
    if t <= times[0] {
        return values[0];
    }
    if t >= times[n - 1] {
        return values[n - 1];
    }
    let k = match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => return values[i],
        Err(i) => i - 1,
    };
    let h = times[k + 1] - times[k];
    let s = (t - times[k]) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * values[k] + h10 * h * tangents[k] + h01 * values[k + 1] + h11 * h * tangents[k + 1]
}
