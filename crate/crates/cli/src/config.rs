//! Campaign configuration: one JSON document describing the index
//! function, the grid, the ensemble size, and the solver budgets.
//! Unknown keys are rejected so typos fail loudly instead of being
//! silently ignored.

use mfvolterra::hurst::HurstFunction;
use mfvolterra::quad::QuadratureSpec;
use mfvolterra::simulate::SampleMethod;
use mfvolterra::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Index-function shape, tagged by `shape` in kebab-case.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HurstSpec {
    Constant { value: f64 },
    AffineClamped { intercept: f64, slope: f64, lo: f64, hi: f64 },
    Sinusoidal { mean: f64, amplitude: f64, omega: f64, phase: f64 },
    Table { times: Vec<f64>, values: Vec<f64> },
    LogReciprocal { t_lo: f64, t_hi: f64 },
}

impl HurstSpec {
    pub fn build(&self) -> Result<HurstFunction> {
        match self {
            HurstSpec::Constant { value } => HurstFunction::constant(*value),
            HurstSpec::AffineClamped { intercept, slope, lo, hi } => {
                HurstFunction::affine_clamped(*intercept, *slope, *lo, *hi)
            }
            HurstSpec::Sinusoidal { mean, amplitude, omega, phase } => {
                HurstFunction::sinusoidal(*mean, *amplitude, *omega, *phase)
            }
            HurstSpec::Table { times, values } => {
                HurstFunction::table(times.clone(), values.clone())
            }
            HurstSpec::LogReciprocal { t_lo, t_hi } => {
                HurstFunction::log_reciprocal(*t_lo, *t_hi)
            }
        }
    }
}

/// Verification suites selectable by flag or by the `--suite` option.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    Covariance,
    Moments,
    Lass,
    Holder,
    Berman,
    Lnd,
    Localtime,
    Tanaka,
    All,
}

impl SuiteName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "covariance" => Ok(SuiteName::Covariance),
            "moments" => Ok(SuiteName::Moments),
            "lass" => Ok(SuiteName::Lass),
            "holder" => Ok(SuiteName::Holder),
            "berman" => Ok(SuiteName::Berman),
            "lnd" => Ok(SuiteName::Lnd),
            "localtime" => Ok(SuiteName::Localtime),
            "tanaka" => Ok(SuiteName::Tanaka),
            "all" => Ok(SuiteName::All),
            other => Err(Error::Domain(format!(
                "unknown suite '{other}'; expected one of covariance, moments, lass, \
                 holder, berman, lnd, localtime, tanaka, all"
            ))),
        }
    }

    pub fn expand(list: &[SuiteName]) -> Vec<SuiteName> {
        if list.is_empty() || list.contains(&SuiteName::All) {
            vec![
                SuiteName::Covariance,
                SuiteName::Moments,
                SuiteName::Lass,
                SuiteName::Holder,
                SuiteName::Berman,
                SuiteName::Lnd,
                SuiteName::Localtime,
                SuiteName::Tanaka,
            ]
        } else {
            list.to_vec()
        }
    }
}

fn default_n_sub() -> usize {
    1024
}

fn default_method() -> SampleMethod {
    SampleMethod::Cholesky
}

/// One campaign: everything a subcommand needs, echoed verbatim into the
/// output manifest for reproducibility.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub hurst: HurstSpec,
    /// Horizon `T` of the time grid.
    pub horizon: f64,
    /// Number of grid points (simulate/verify) or weighted-occupation
    /// cells (tanaka).
    pub grid_points: usize,
    pub n_paths: usize,
    /// Integration cells for the direct stochastic-integral sampler.
    #[serde(default = "default_n_sub")]
    pub n_sub: usize,
    pub seed: u64,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    /// Default output directory; the `--out` flag overrides it.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Suites run by `verify` when `--suite` is not given.
    #[serde(default)]
    pub suites: Vec<SuiteName>,
    #[serde(default = "default_method")]
    pub method: SampleMethod,
    /// Spatial levels for the local-time and weighted-occupation commands.
    #[serde(default)]
    pub levels: Option<Vec<f64>>,
    /// Time checkpoints for local-time fields (defaults to quarters of T).
    #[serde(default)]
    pub checkpoints: Option<Vec<f64>>,
    /// Smoothing bandwidths for the weighted-occupation checks.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
}

impl CampaignConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Domain(format!("cannot read config {}: {e}", path.display())))?;
        let config: CampaignConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Domain(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Structural validation; the index-range constraint `1/2 < a ≤ b < 1`
    /// is enforced by the shape constructors themselves.
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Domain(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if self.grid_points < 2 {
            return Err(Error::Domain(format!(
                "grid_points must be at least 2, got {}",
                self.grid_points
            )));
        }
        if self.n_paths < 1 {
            return Err(Error::Domain("n_paths must be at least 1".into()));
        }
        if matches!(self.hurst, HurstSpec::LogReciprocal { .. }) {
            return Err(Error::Domain(
                "the log-reciprocal index is defined only on a closed subinterval of \
                 (e, e^2) and cannot drive a simulation from t = 0; its degenerate \
                 weighted-occupation behavior is reported by the tanaka suite"
                    .into(),
            ));
        }
        self.hurst.build().map(|_| ())
    }

    pub fn build_hurst(&self) -> Result<HurstFunction> {
        self.hurst.build()
    }

    /// Checkpoints for local-time fields: configured ones, else quarters
    /// of the horizon.
    pub fn checkpoints_or_default(&self) -> Vec<f64> {
        self.checkpoints.clone().unwrap_or_else(|| {
            (1..=4).map(|k| self.horizon * k as f64 / 4.0).collect()
        })
    }

    pub fn levels_or_default(&self) -> Vec<f64> {
        self.levels.clone().unwrap_or_else(|| vec![0.0])
    }

    pub fn eps_or_default(&self) -> Vec<f64> {
        self.eps.clone().unwrap_or_else(|| vec![1e-2, 1e-3])
    }
}
