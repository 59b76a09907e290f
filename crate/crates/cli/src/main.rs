//! Command-line front end: campaign configuration, ensemble export,
//! verification suites, and local-time field emission.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 numerical failure.  Results are independent of worker-thread count;
//! `MFVOLTERRA_THREADS` caps the pool.

mod config;
mod suites;

use clap::{Args, Parser, Subcommand};
use config::{CampaignConfig, SuiteName};
use mfvolterra::analysis::{local_time_binned, BinGrid};
use mfvolterra::report::Suite;
use mfvolterra::simulate::{PathEnsemble, RandomSeed};
use mfvolterra::tanaka::{
    deterministic_weighted_occupation, degenerate_profile_case, weighted_local_time, VarianceConvention,
};
use mfvolterra::{Error, TimeGrid};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "mfvolterra",
    version,
    about = "Numerical laboratory for a Volterra-type multifractional Gaussian process"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON campaign configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an ensemble and export CSV, binary, and a manifest.
    Simulate(CommonArgs),
    /// Run verification suites and emit a JSON report.
    Verify {
        #[command(flatten)]
        args: CommonArgs,
        /// One of covariance, moments, lass, holder, berman, lnd,
        /// localtime, tanaka, all (default: the config's suites).
        #[arg(long)]
        suite: Option<String>,
    },
    /// Estimate local-time fields for the first path of an ensemble.
    Localtime {
        #[command(flatten)]
        args: CommonArgs,
        /// Previously exported binary ensemble to ingest instead of
        /// sampling afresh.
        #[arg(long)]
        paths: Option<PathBuf>,
    },
    /// Weighted-occupation expectation checks and the degenerate-index
    /// report.
    Tanaka(CommonArgs),
}

const EXIT_VERIFICATION: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Domain(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_for(&err))
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("MFVOLTERRA_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                // results are thread-count invariant; this only caps workers
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: MFVOLTERRA_THREADS must be a positive integer, got '{threads}'");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Verify { args, suite } => cmd_verify(&args, suite.as_deref()),
        Command::Localtime { args, paths } => cmd_localtime(&args, paths.as_deref()),
        Command::Tanaka(args) => cmd_tanaka(&args),
    }
}

fn prepare(args: &CommonArgs) -> Result<(CampaignConfig, PathBuf), Error> {
    let config = CampaignConfig::load(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::Domain(format!("cannot create output dir {}: {e}", out.display())))?;
    Ok((config, out))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Format(format!("serializing {}: {e}", path.display())))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateManifest<'a> {
    command: &'static str,
    config: &'a CampaignConfig,
    method: &'static str,
    seed: u64,
    n_paths: usize,
    grid_points: usize,
    horizon: f64,
    wall_time_seconds: f64,
    files: ManifestFiles,
}

#[derive(Serialize)]
struct ManifestFiles {
    csv: String,
    binary: String,
}

fn cmd_simulate(args: &CommonArgs) -> ExitCode {
    let (config, out) = match prepare(args) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let started = Instant::now();
    let ens = match suites::sample_campaign(&config) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let csv_path = out.join("ensemble.csv");
    let bin_path = out.join("ensemble.bin");
    if let Err(e) = ens.write_csv(&csv_path).and_then(|_| ens.write_binary(&bin_path)) {
        return fail(e);
    }
    let manifest = SimulateManifest {
        command: "simulate",
        config: &config,
        method: ens.method().name(),
        seed: config.seed,
        n_paths: config.n_paths,
        grid_points: config.grid_points,
        horizon: config.horizon,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        files: ManifestFiles {
            csv: "ensemble.csv".into(),
            binary: "ensemble.bin".into(),
        },
    };
    if let Err(e) = write_json(&out.join("manifest.json"), &manifest) {
        return fail(e);
    }
    println!(
        "simulated {} paths on {} grid points ({} sampler) into {}",
        config.n_paths,
        config.grid_points,
        ens.method().name(),
        out.display()
    );
    ExitCode::SUCCESS
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    command: &'static str,
    config: &'a CampaignConfig,
    suites: Vec<Suite>,
    all_pass: bool,
    wall_time_seconds: f64,
}

fn cmd_verify(args: &CommonArgs, suite_flag: Option<&str>) -> ExitCode {
    let (config, out) = match prepare(args) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let selected = match suite_flag {
        Some(s) => match SuiteName::parse(s) {
            Ok(name) => SuiteName::expand(&[name]),
            Err(e) => return fail(e),
        },
        None => SuiteName::expand(&config.suites),
    };
    let started = Instant::now();
    let mut suites_run = Vec::new();
    for name in selected {
        match suites::run_suite(name, &config) {
            Ok(suite) => {
                for check in &suite.checks {
                    println!(
                        "[{}] {}: {} (value {:.6e}, tolerance {:.6e})",
                        if check.pass { "PASS" } else { "FAIL" },
                        suite.suite,
                        check.check,
                        check.value,
                        check.tolerance
                    );
                }
                suites_run.push(suite);
            }
            Err(e) => return fail(e),
        }
    }
    let all_pass = suites_run.iter().all(|s| s.all_pass);
    let report = VerifyReport {
        command: "verify",
        config: &config,
        suites: suites_run,
        all_pass,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_json(&out.join("verify_report.json"), &report) {
        return fail(e);
    }
    if all_pass {
        println!("all checks passed");
        ExitCode::SUCCESS
    } else {
        eprintln!("verification failed; see verify_report.json");
        ExitCode::from(EXIT_VERIFICATION)
    }
}

#[derive(Serialize)]
struct LocaltimeManifest<'a> {
    command: &'static str,
    config: &'a CampaignConfig,
    source: String,
    checkpoints: Vec<f64>,
    levels: Vec<f64>,
    weighted_files: Vec<String>,
    wall_time_seconds: f64,
}

fn cmd_localtime(args: &CommonArgs, paths_file: Option<&Path>) -> ExitCode {
    let (config, out) = match prepare(args) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let started = Instant::now();
    let h = match config.build_hurst() {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let grid = match TimeGrid::uniform(config.grid_points, config.horizon) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let (ens, source) = match paths_file {
        Some(file) => {
            match PathEnsemble::read_binary(
                file,
                &grid,
                config.method,
                RandomSeed::new(config.seed),
            ) {
                Ok(v) => (v, file.display().to_string()),
                Err(e) => return fail(e),
            }
        }
        None => match suites::sample_campaign(&config) {
            Ok(v) => (v, format!("fresh seed {}", config.seed)),
            Err(e) => return fail(e),
        },
    };
    let times = grid.times();
    let values = ens.path(0);
    let bins = match BinGrid::freedman_diaconis(&values) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let checkpoints = config.checkpoints_or_default();
    let est = match local_time_binned(times, &values, &bins, &checkpoints) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    if let Err(e) = est.write_csv(&out.join("localtime.csv")) {
        return fail(e);
    }

    let levels = config.levels_or_default();
    let mut weighted_files = Vec::new();
    if h.is_differentiable() {
        for (k, &level) in levels.iter().enumerate() {
            let curve = match weighted_local_time(
                times,
                &values,
                level,
                &h,
                &bins,
                VarianceConvention::Normalized,
            ) {
                Ok(v) => v,
                Err(e) => return fail(e),
            };
            let name = format!("weighted_{k}.csv");
            if let Err(e) = write_weighted_csv(&out.join(&name), &curve) {
                return fail(e);
            }
            weighted_files.push(name);
        }
    } else {
        eprintln!(
            "warning: index shape '{}' exposes no derivative; weighted local-time \
             output skipped",
            h.shape_name()
        );
    }
    let manifest = LocaltimeManifest {
        command: "localtime",
        config: &config,
        source,
        checkpoints,
        levels,
        weighted_files,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_json(&out.join("localtime_manifest.json"), &manifest) {
        return fail(e);
    }
    println!("local-time fields written to {}", out.display());
    ExitCode::SUCCESS
}

fn write_weighted_csv(
    path: &Path,
    curve: &mfvolterra::tanaka::WeightedLocalTime,
) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Format(format!("cannot open {}: {e}", path.display())))?;
    w.write_record(["checkpoint", "weighted_local_time"])
        .map_err(|e| Error::Format(format!("csv header: {e}")))?;
    for (t, v) in curve.checkpoints().iter().zip(curve.values()) {
        w.write_record([t.to_string(), v.to_string()])
            .map_err(|e| Error::Format(format!("csv row: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct DeterministicValue {
    a: f64,
    eps: f64,
    t: f64,
    convention: &'static str,
    value: f64,
}

#[derive(Serialize)]
struct TanakaReport<'a> {
    command: &'static str,
    config: &'a CampaignConfig,
    suite: Suite,
    deterministic: Vec<DeterministicValue>,
    degenerate_case: mfvolterra::tanaka::DegenerateProfileReport,
    wall_time_seconds: f64,
}

fn cmd_tanaka(args: &CommonArgs) -> ExitCode {
    let (config, out) = match prepare(args) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let started = Instant::now();
    let suite = match suites::run_suite(SuiteName::Tanaka, &config) {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    for check in &suite.checks {
        println!(
            "[{}] {} (value {:.6e}, tolerance {:.6e})",
            if check.pass { "PASS" } else { "FAIL" },
            check.check,
            check.value,
            check.tolerance
        );
    }
    let h = match config.build_hurst() {
        Ok(v) => v,
        Err(e) => return fail(e),
    };
    let mut deterministic = Vec::new();
    for t in [0.5 * config.horizon, config.horizon] {
        for &eps in &config.eps_or_default() {
            for &a in &config.levels_or_default() {
                for convention in
                    [VarianceConvention::Normalized, VarianceConvention::Unnormalized]
                {
                    let value = match deterministic_weighted_occupation(
                        &h,
                        a,
                        eps,
                        t,
                        convention,
                        &config.quadrature,
                    ) {
                        Ok(v) => v,
                        Err(e) => return fail(e),
                    };
                    deterministic.push(DeterministicValue {
                        a,
                        eps,
                        t,
                        convention: convention.name(),
                        value,
                    });
                }
            }
        }
    }
    let e = std::f64::consts::E;
    let degenerate_case = match degenerate_profile_case(e + 0.05, e * e - 0.05) {
        Ok(v) => v,
        Err(err) => return fail(err),
    };
    let all_pass = suite.all_pass;
    let report = TanakaReport {
        command: "tanaka",
        config: &config,
        suite,
        deterministic,
        degenerate_case,
        wall_time_seconds: started.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_json(&out.join("tanaka_report.json"), &report) {
        return fail(e);
    }
    if all_pass {
        println!("all weighted-occupation checks passed");
        ExitCode::SUCCESS
    } else {
        eprintln!("weighted-occupation verification failed; see tanaka_report.json");
        ExitCode::from(EXIT_VERIFICATION)
    }
}
