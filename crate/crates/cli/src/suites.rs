//! Verification suites behind `mfvolterra verify`: each suite re-derives a
//! family of library guarantees on the configured campaign and reports
//! named checks with observed values and tolerances.
//!
//! Statistical suites refuse to run underpowered: ensembles too small to
//! distinguish a genuine violation from noise produce a failed
//! "insufficient sample" check instead of a vacuous pass.

use crate::config::{CampaignConfig, SuiteName};
use mfvolterra::analysis::{
    berman_integral, berman_refinement, holder_exponent, lass_covariance_limit,
    lnd_i_lower_bound, lnd_quadratic_form_margin, lnd_ratio, lnd_whole_past_bound,
    local_time_binned, log_spaced, occupation_identity_residual, BinGrid,
};
use mfvolterra::covariance::{self, CovMethod, CovarianceMatrix};
use mfvolterra::hurst::HurstFunction;
use mfvolterra::quad::QuadratureSpec;
use mfvolterra::report::{Check, Suite};
use mfvolterra::simulate::{sample_cholesky, PathEnsemble, RandomSeed};
use mfvolterra::specfun;
use mfvolterra::tanaka::{expectation_identity_on, degenerate_profile_case, tanaka_grid};
use mfvolterra::{Result, TimeGrid};

/// Smallest ensemble the moment checks accept.
const MIN_MOMENT_PATHS: usize = 100;
/// Smallest ensemble the weighted-occupation expectation checks accept.
const MIN_TANAKA_PATHS: usize = 1000;

pub fn run_suite(name: SuiteName, config: &CampaignConfig) -> Result<Suite> {
    let h = config.build_hurst()?;
    let spec = config.quadrature;
    match name {
        SuiteName::Covariance => covariance_suite(config, &h, &spec),
        SuiteName::Moments => moments_suite(config, &h, &spec),
        SuiteName::Lass => lass_suite(config, &h, &spec),
        SuiteName::Holder => holder_suite(config, &h, &spec),
        SuiteName::Berman => berman_suite(config, &h, &spec),
        SuiteName::Lnd => lnd_suite(config, &h, &spec),
        SuiteName::Localtime => localtime_suite(config, &h, &spec),
        SuiteName::Tanaka => tanaka_suite(config, &h, &spec),
        SuiteName::All => unreachable!("expanded before dispatch"),
    }
}

fn insufficient(topic: &str, got: usize, needed: usize) -> Check {
    Check::verdict(
        format!("{topic} — insufficient sample (n_paths {got} < {needed})"),
        got as f64,
        needed as f64,
        false,
    )
}

/// Normalization identity, construction-route equivalence, and matrix
/// shape invariants of the exact covariance.
fn covariance_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<Suite> {
    let mut checks = Vec::new();

    let mut worst_identity = 0.0_f64;
    for i in 0..9 {
        let lambda = 0.55 + 0.40 * i as f64 / 8.0;
        let via_beta = specfun::norm_const_sq_recip_via_beta(lambda)?;
        let direct = 1.0 / specfun::norm_const_sq(lambda)?;
        worst_identity = worst_identity.max((via_beta - direct).abs() / direct.abs());
    }
    checks.push(Check::le(
        "normalization constant: beta route vs direct, worst relative deviation",
        worst_identity,
        1e-10,
    ));

    let grid = TimeGrid::uniform(config.grid_points, config.horizon)?;
    let product = CovarianceMatrix::build(&grid, h, CovMethod::KernelProduct, spec)?;
    let double = CovarianceMatrix::build(&grid, h, CovMethod::BetaIntegral, spec)?;
    let mut worst_route = 0.0_f64;
    for i in 0..config.grid_points {
        for j in 0..config.grid_points {
            let a = product.entries()[(i, j)];
            let b = double.entries()[(i, j)];
            if a == 0.0 && b == 0.0 {
                continue;
            }
            worst_route = worst_route.max((a - b).abs() / a.abs().max(b.abs()));
        }
    }
    checks.push(Check::le(
        "covariance entries: kernel-product vs double-integral route, worst relative deviation",
        worst_route,
        1e-5,
    ));
    checks.push(Check::le(
        "covariance matrix asymmetry",
        product.symmetry_defect(),
        1e-12,
    ));
    checks.push(Check::ge(
        "covariance matrix minimum eigenvalue (relative to max diagonal)",
        product.min_eigenvalue() / product.max_diagonal(),
        -1e-10,
    ));
    Ok(Suite::new("covariance", checks))
}

/// Sampled first and second moments of the exact sampler against the
/// quadrature values.
fn moments_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<Suite> {
    if config.n_paths < MIN_MOMENT_PATHS {
        return Ok(Suite::new(
            "moments",
            vec![insufficient(
                "moment checks against the exact law",
                config.n_paths,
                MIN_MOMENT_PATHS,
            )],
        ));
    }
    let grid = TimeGrid::uniform(config.grid_points, config.horizon)?;
    let ens = sample_cholesky(&grid, h, config.n_paths, RandomSeed::new(config.seed), spec)?;
    let n = config.n_paths as f64;
    let times = grid.times();
    let mut var_ok = 0_usize;
    let mut mean_ok = 0_usize;
    let mut total = 0_usize;
    for (j, &t) in times.iter().enumerate().skip(1) {
        let exact = covariance::variance(t, h)?;
        let sample = ens.marginal(j);
        let mean = sample.iter().sum::<f64>() / n;
        let var = sample.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        total += 1;
        if (var - exact).abs() <= 3.0 * exact * (2.0 / (n - 1.0)).sqrt() {
            var_ok += 1;
        }
        if mean.abs() <= 3.0 * (exact / n).sqrt() {
            mean_ok += 1;
        }
    }
    let checks = vec![
        Check::ge(
            "fraction of grid times with sample variance within 3 SE of the exact variance",
            var_ok as f64 / total as f64,
            0.95,
        ),
        Check::ge(
            "fraction of grid times with sample mean within 3 SE of zero",
            mean_ok as f64 / total as f64,
            0.95,
        ),
    ];
    Ok(Suite::new("moments", checks))
}

/// Rescaled increment covariance against its small-scale limit.
fn lass_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<Suite> {
    let t0 = 0.5 * config.horizon;
    let (u, v) = (1.0, 0.5);
    let scales = [0.3, 0.1, 0.03].map(|f| f * config.horizon);
    let mut gaps = Vec::new();
    for eps in scales {
        let (rescaled, limit) = lass_covariance_limit(t0, eps, u, v, h, spec)?;
        gaps.push((rescaled - limit).abs() / limit.abs());
    }
    let mut checks = Vec::new();
    if h.lo() == h.hi() {
        // constant index: the rescaling is exact at every scale
        for (eps, gap) in scales.iter().zip(&gaps) {
            checks.push(Check::le(
                format!("rescaled increment covariance vs limit at scale {eps:.3e}"),
                *gap,
                1e-5,
            ));
        }
    } else {
        checks.push(Check::verdict(
            "small-scale covariance gap shrinks across scale decades",
            gaps[gaps.len() - 1],
            gaps[0],
            gaps.windows(2).all(|w| w[1] < w[0]),
        ));
    }
    Ok(Suite::new("lass", checks))
}

/// Regression estimate of the pointwise regularity exponent.
fn holder_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<Suite> {
    let t0 = 0.4 * config.horizon;
    let window = log_spaced(1e-4, 1e-2, 9);
    let report = holder_exponent(t0, h, &window, spec)?;
    let target = h.eval(t0);
    let tol = if h.lo() == h.hi() { 1e-3 } else { 0.05 };
    let shifted: Vec<f64> = window.iter().map(|e| 2.0 * e).collect();
    let report2 = holder_exponent(t0, h, &shifted, spec)?;
    let checks = vec![
        Check::le(
            format!("regularity exponent error at t0={t0}"),
            (report.estimate - target).abs(),
            tol,
        ),
        Check::le(
            "regularity exponent shift under doubling the regression window",
            (report.estimate - report2.estimate).abs(),
            0.02,
        ),
    ];
    Ok(Suite::new("holder", checks))
}

/// The double integral of inverse increment standard deviation: finite,
/// refinement-stable, and matching the closed form for a constant index.
fn berman_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    _spec: &QuadratureSpec,
) -> Result<Suite> {
    let spec = QuadratureSpec::relaxed();
    let t = config.horizon;
    let value = berman_integral(h, t, 128, &spec)?;
    let (coarse, fine) = berman_refinement(h, t, 128, &spec)?;
    let mut checks = vec![
        Check::verdict(
            "inverse-increment double integral finite and positive",
            value,
            f64::INFINITY,
            value.is_finite() && value > 0.0,
        ),
        Check::le(
            "refinement drift on grid doubling",
            (fine - coarse).abs() / coarse,
            0.01,
        ),
    ];
    if h.lo() == h.hi() {
        let hurst = h.lo();
        let c = specfun::norm_const_sq(hurst)?.sqrt();
        let exact = c * 2.0 * t.powf(2.0 - hurst) / ((1.0 - hurst) * (2.0 - hurst));
        checks.push(Check::le(
            "constant-index double integral vs closed form",
            (value - exact).abs() / exact,
            0.01,
        ));
    }
    Ok(Suite::new("berman", checks))
}

/// Conditional-variance (local nondeterminism) lower bounds.
fn lnd_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<Suite> {
    let times: Vec<f64> = [0.5, 0.6, 0.7, 0.8]
        .iter()
        .map(|f| f * config.horizon)
        .collect();
    let v = lnd_ratio(&times, h, spec)?;
    let bound = lnd_whole_past_bound(&times, h, spec)?;
    let margin = lnd_quadratic_form_margin(&times, h, spec)?;
    let iv = lnd_i_lower_bound(0.6, 0.9, spec)?;
    let checks = vec![
        Check::ge("conditional variance ratio", v, 1e-12),
        Check::ge(
            "conditional variance ratio minus the whole-past lower bound",
            v - bound,
            -1e-8,
        ),
        Check::ge("increment quadratic-form margin", margin, 0.0),
        Check::ge("double-integral positivity bound at (0.6, 0.9)", iv, 1e-12),
    ];
    Ok(Suite::new("lnd", checks))
}

/// Exact bookkeeping of the binned occupation density on sampled paths.
fn localtime_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<Suite> {
    let grid = TimeGrid::uniform(config.grid_points, config.horizon)?;
    let n_paths = config.n_paths.min(20);
    let ens = sample_cholesky(&grid, h, n_paths, RandomSeed::new(config.seed), spec)?;
    let times = grid.times();
    let t = config.horizon;
    let checkpoints = config.checkpoints_or_default();
    let mut worst_mass = 0.0_f64;
    let mut monotone_violations = 0_usize;
    let mut worst_indicator = 0.0_f64;
    let mut worst_linear_rel = 0.0_f64;
    for p in 0..n_paths {
        let values = ens.path(p);
        let bins = BinGrid::freedman_diaconis(&values)?;
        let est = local_time_binned(times, &values, &bins, &checkpoints)?;
        for (k, &tau) in checkpoints.iter().enumerate() {
            worst_mass = worst_mass.max((est.mass(k) - tau).abs());
        }
        let d = est.density();
        for b in 0..bins.n_bins() {
            for k in 1..checkpoints.len() {
                if d[(k, b)] < d[(k - 1, b)] {
                    monotone_violations += 1;
                }
            }
        }
        let mid = bins.centers()[bins.n_bins() / 2];
        let half = bins.width() / 2.0;
        let indicator = occupation_identity_residual(
            times,
            &values,
            |x| if (x - mid).abs() < half { 1.0 } else { 0.0 },
            &bins,
        )?;
        worst_indicator = worst_indicator.max(indicator);
        let linear = occupation_identity_residual(times, &values, |x| x, &bins)?;
        worst_linear_rel = worst_linear_rel.max(linear / (bins.width() * t / 2.0 + 1e-12));
    }
    let checks = vec![
        Check::le(
            format!("occupation mass deviation across {n_paths} paths"),
            worst_mass,
            1e-12,
        ),
        Check::le(
            "monotonicity violations of the occupation field",
            monotone_violations as f64,
            0.0,
        ),
        Check::le(
            "occupation identity residual for a bin indicator",
            worst_indicator,
            1e-12,
        ),
        Check::le(
            "occupation identity residual for g(x)=x against the midpoint-bias budget",
            worst_linear_rel,
            1.0,
        ),
    ];
    Ok(Suite::new("localtime", checks))
}

/// Expectation identity of the smoothed weighted occupation, plus the
/// degenerate reciprocal-log index report.
fn tanaka_suite(
    config: &CampaignConfig,
    h: &HurstFunction,
    spec: &QuadratureSpec,
) -> Result<Suite> {
    let mut checks = Vec::new();
    if config.n_paths < MIN_TANAKA_PATHS {
        checks.push(insufficient(
            "weighted-occupation expectation checks",
            config.n_paths,
            MIN_TANAKA_PATHS,
        ));
    } else {
        // enough cells that the left-endpoint discretization bias of the
        // weighted sum stays well below the Monte Carlo resolution
        let cells = config.grid_points.max(128);
        let grid = tanaka_grid(config.horizon, cells)?;
        let ens = sample_cholesky(&grid, h, config.n_paths, RandomSeed::new(config.seed), spec)?;
        for t in [0.5 * config.horizon, config.horizon] {
            for &eps in &config.eps_or_default() {
                for &a in &config.levels_or_default() {
                    let check = expectation_identity_on(&ens, h, a, eps, t, spec)?;
                    checks.push(Check::verdict(
                        format!(
                            "smoothed weighted occupation mean vs exact at \
                             (a={a}, eps={eps:.1e}, t={t})"
                        ),
                        (check.mc_mean - check.deterministic).abs(),
                        3.0 * check.mc_se,
                        check.pass,
                    ));
                }
            }
        }
    }
    let e = std::f64::consts::E;
    let report = degenerate_profile_case(e + 0.05, e * e - 0.05)?;
    checks.push(Check::le(
        "degenerate index: unnormalized variance flat across its window",
        report.max_constant_rel_dev,
        1e-10,
    ));
    checks.push(Check::verdict(
        "degenerate index: frozen unnormalized weight, live normalized weight",
        report.max_normalized_derivative,
        1e-3,
        report.degenerate && report.normalized_varies,
    ));
    Ok(Suite::new("tanaka", checks))
}

/// Sample an ensemble with the method the campaign selected.
pub fn sample_campaign(config: &CampaignConfig) -> Result<PathEnsemble> {
    let h = config.build_hurst()?;
    let grid = TimeGrid::uniform(config.grid_points, config.horizon)?;
    match config.method {
        mfvolterra::simulate::SampleMethod::Cholesky => sample_cholesky(
            &grid,
            &h,
            config.n_paths,
            RandomSeed::new(config.seed),
            &config.quadrature,
        ),
        mfvolterra::simulate::SampleMethod::Volterra => mfvolterra::simulate::sample_volterra(
            &grid,
            &h,
            config.n_sub,
            config.n_paths,
            RandomSeed::new(config.seed),
            &config.quadrature,
        ),
    }
}
