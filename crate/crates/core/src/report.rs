//! Pass/fail bookkeeping for verification suites: each numeric check keeps
//! its observed value and tolerance so reports stay auditable.

use serde::{Deserialize, Serialize};

/// One named comparison.  `value` is the observed discrepancy or statistic,
/// `tolerance` the bound it was held to, `pass` the verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub check: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn le(check: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { check: check.into(), value, tolerance, pass: value <= tolerance }
    }

    /// Passes when `value >= tolerance`.
    pub fn ge(check: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { check: check.into(), value, tolerance, pass: value >= tolerance }
    }

    /// A check that already carries its verdict (e.g. a statistical test).
    pub fn verdict(check: impl Into<String>, value: f64, tolerance: f64, pass: bool) -> Self {
        Self { check: check.into(), value, tolerance, pass }
    }
}

/// A named bundle of checks with an aggregate verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Suite {
    pub suite: String,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

impl Suite {
    pub fn new(suite: impl Into<String>, checks: Vec<Check>) -> Self {
        let all_pass = checks.iter().all(|c| c.pass);
        Self { suite: suite.into(), checks, all_pass }
    }

    pub fn merge(suites: Vec<Suite>) -> Vec<Check> {
        suites.into_iter().flat_map(|s| s.checks).collect()
    }
}
