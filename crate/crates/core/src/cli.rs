//! Command-line front end: simulations, theory solves and comparisons.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifacts::{fmt_f64, write_csv, write_json, FixedPointCache, RunManifest};
use crate::detequiv::{SolverOptions, TheoryProblem};
use crate::error::{Error, Result};
use crate::generror::{asymptotic_generror, GenErrorOptions, GenErrorReport};
use crate::model::ExperimentConfig;
use crate::simulate::{nonzero_bulk, run, Estimate, RunArtifact, SimulationOptions, SpikeMode};
use crate::spectrum::{
    density_grid_cached, ks_distance, parse_grid, DensityCurve, DEFAULT_EPS_SCHEDULE,
};

/// Environment variable holding the default worker count.
pub const JOBS_ENV: &str = "SPIKERF_JOBS";

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ToleranceFailure = 1,
    UsageError = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Parser, Debug)]
#[command(name = "spikerf", version, about = "Spiked random-feature laboratory")]
struct Cli {
    /// Worker threads for independent seeds, grid points and sweep points.
    #[arg(long, global = true, env = JOBS_ENV, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the finite-size pipeline for consecutive seeds.
    Simulate(SimulateArgs),
    /// Bulk density of the deterministic equivalent on a grid.
    TheorySpectrum(SpectrumArgs),
    /// Asymptotic generalization error over a sweep of α.
    TheoryGenerror(GenerrorArgs),
    /// Simulation against theory with a pass/fail summary.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    GradientStep,
    Spiked,
}

impl From<ModeArg> for SpikeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::GradientStep => SpikeMode::GradientStep,
            ModeArg::Spiked => SpikeMode::Spiked,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Number of seeds, starting at the configured one.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// First layer used for the features: one gradient step or its spiked approximation.
    #[arg(long, value_enum, default_value_t = ModeArg::Spiked)]
    mode: ModeArg,
    /// Test points for the Monte Carlo error.
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Grid as `min:max:points`.
    #[arg(long, default_value = "0:10:400")]
    grid: String,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Fixed-point cache (JSON lines), created if missing.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Comma-separated decreasing ε schedule.
    #[arg(long)]
    eps: Option<String>,
    /// Fixed-point residual tolerance.
    #[arg(long)]
    solver_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct GenerrorArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Sweep as `min:max:points`.
    #[arg(long)]
    alpha_sweep: String,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
    /// Add the fluctuation of the group means at the configured width.
    #[arg(long)]
    finite_width: bool,
    /// Fixed-point residual tolerance.
    #[arg(long)]
    solver_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Experiment configuration (JSON).
    config: PathBuf,
    /// Number of seeds, starting at the configured one.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// First layer used for the features: one gradient step or its spiked approximation.
    #[arg(long, value_enum, default_value_t = ModeArg::Spiked)]
    mode: ModeArg,
    /// Largest accepted Kolmogorov–Smirnov distance.
    #[arg(long, default_value_t = 0.03)]
    ks_tol: f64,
    /// Largest accepted relative gap of the generalization error.
    #[arg(long, default_value_t = 0.05)]
    gen_tol: f64,
    /// Theory grid `min:max:points`; by default it spans the empirical bulk.
    #[arg(long)]
    grid: Option<String>,
    /// Test points for the Monte Carlo error.
    #[arg(long, default_value_t = 10_000)]
    n_test: usize,
    /// Add the fluctuation of the group means at the configured width.
    #[arg(long)]
    finite_width: bool,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::UsageError.code()
            } else {
                ExitStatus::Success.code()
            };
        }
    };
    match dispatch(cli) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Io(_) | Error::Json(_) => ExitStatus::UsageError.code(),
                _ => ExitStatus::ToleranceFailure.code(),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitStatus> {
    if cli.jobs == 0 {
        return Err(Error::Config("--jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cli.jobs)))?;
    let jobs = cli.jobs;
    pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::TheorySpectrum(a) => cmd_theory_spectrum(&a, jobs),
        Command::TheoryGenerror(a) => cmd_theory_generror(&a),
        Command::Compare(a) => cmd_compare(&a, jobs),
    })
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    if !path.exists() {
        return Err(Error::Config(format!(
            "configuration file {} not found",
            path.display()
        )));
    }
    ExperimentConfig::from_path(path)
}

fn solver_options(tol: Option<f64>) -> Result<SolverOptions> {
    let mut opts = SolverOptions::default();
    if let Some(t) = tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Config(format!(
                "solver tolerance must lie in (0, 1), got {t}"
            )));
        }
        opts.tol = t;
    }
    Ok(opts)
}

fn parse_eps(spec: Option<&str>) -> Result<Vec<f64>> {
    match spec {
        None => Ok(DEFAULT_EPS_SCHEDULE.to_vec()),
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad ε schedule entry {t:?}")))
            })
            .collect(),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_manifest(path: &Path, mut manifest: RunManifest) -> Result<()> {
    manifest.finish();
    write_json(path, &manifest)
}

/// Seed-pooled summary written next to the per-seed artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub gen_error: Estimate,
    /// Eigenvalues of every seed, concatenated in seed order.
    pub eigenvalues: Vec<f64>,
}

fn aggregate(cfg: &ExperimentConfig, runs: &[RunArtifact]) -> Aggregate {
    let errors: Vec<f64> = runs.iter().map(|r| r.gen_error.mean).collect();
    Aggregate {
        config_hash: cfg.config_hash(),
        seeds: runs.iter().map(|r| r.config.seed).collect(),
        gen_error: mean_stderr(&errors),
        eigenvalues: runs
            .iter()
            .flat_map(|r| r.eigenvalues.iter().copied())
            .collect(),
    }
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> Estimate {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let stderr = if xs.len() > 1 {
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Estimate { mean, stderr }
}

fn simulate_seeds(
    cfg: &ExperimentConfig,
    seeds: usize,
    opts: &SimulationOptions,
) -> Result<Vec<RunArtifact>> {
    if seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    (0..seeds as u64)
        .into_par_iter()
        .map(|s| run(&cfg.with_seed(cfg.seed + s), opts))
        .collect()
}

fn cmd_simulate(a: &SimulateArgs) -> Result<ExitStatus> {
    let cfg = load_config(&a.config)?;
    ensure_dir(&a.out)?;
    let mut manifest = RunManifest::start(&cfg.config_hash(), "simulate");
    let opts = SimulationOptions {
        mode: a.mode.into(),
        n_test: a.n_test,
        spectrum: true,
    };
    let runs = simulate_seeds(&cfg, a.seeds, &opts)?;
    for r in &runs {
        let path = a.out.join(format!("seed_{}.json", r.config.seed));
        write_json(&path, r)?;
        manifest.outputs.push(path);
    }
    let path = a.out.join("aggregate.json");
    write_json(&path, &aggregate(&cfg, &runs))?;
    manifest.outputs.push(path);
    write_manifest(&a.out.join("manifest.json"), manifest)?;
    Ok(ExitStatus::Success)
}

fn density_rows(curve: &DensityCurve) -> Vec<Vec<String>> {
    (0..curve.grid.len())
        .map(|i| {
            vec![
                fmt_f64(curve.grid[i]),
                fmt_f64(curve.density[i]),
                fmt_f64(curve.eps_used[i]),
                curve.converged[i].to_string(),
            ]
        })
        .collect()
}

fn write_density(
    path: &Path,
    cfg: &ExperimentConfig,
    command: &str,
    curve: &DensityCurve,
) -> Result<()> {
    let meta = json!({
        "config_hash": cfg.config_hash(),
        "command": command,
        "version": crate::artifacts::ARTIFACT_VERSION,
        "atom": curve.atom,
        "mass": curve.mass,
        "eps_schedule": curve.eps_schedule,
    });
    write_csv(
        path,
        &meta,
        &["lambda", "density", "eps_used", "converged"],
        &density_rows(curve),
    )
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn cmd_theory_spectrum(a: &SpectrumArgs, jobs: usize) -> Result<ExitStatus> {
    let cfg = load_config(&a.config)?;
    let (lo, hi, points) = parse_grid(&a.grid)?;
    let eps = parse_eps(a.eps.as_deref())?;
    let solver = solver_options(a.solver_tol)?;
    let hash = cfg.config_hash();
    let mut manifest = RunManifest::start(&hash, "theory-spectrum");
    let problem = TheoryProblem::from_config(&cfg)?;
    let cache = a
        .cache
        .as_deref()
        .map(|p| FixedPointCache::open(p, &hash))
        .transpose()?;
    let curve = density_grid_cached(
        &problem,
        lo,
        hi,
        points,
        &eps,
        &solver,
        jobs,
        cache.as_ref(),
    )?;
    if let Some(c) = &cache {
        c.flush()?;
    }
    write_density(&a.out, &cfg, "theory-spectrum", &curve)?;
    manifest.outputs.push(a.out.clone());
    write_manifest(&manifest_path(&a.out), manifest)?;
    Ok(ExitStatus::Success)
}

const SWEEP_FIXED: [&str; 4] = [
    "alpha",
    "gen_error_theory",
    "gen_error_sim_mean",
    "gen_error_sim_stderr",
];

fn sweep_headers(k: usize) -> Vec<String> {
    let mut h: Vec<String> = SWEEP_FIXED.iter().map(|s| s.to_string()).collect();
    h.extend((1..=k).map(|q| format!("tau0_{q}")));
    h.extend((1..=k).map(|q| format!("tau1_{q}")));
    h.push("tau2".into());
    h.push("tau3".into());
    h
}

fn sweep_row(alpha: f64, report: &GenErrorReport, sim: Option<&Estimate>) -> Vec<String> {
    let mut row = vec![fmt_f64(alpha), fmt_f64(report.error)];
    match sim {
        Some(e) => {
            row.push(fmt_f64(e.mean));
            row.push(fmt_f64(e.stderr));
        }
        None => {
            row.push(String::new());
            row.push(String::new());
        }
    }
    row.extend(report.tau.tau0.iter().map(|&v| fmt_f64(v)));
    row.extend(report.tau.tau1.iter().map(|&v| fmt_f64(v)));
    row.push(fmt_f64(report.tau.tau2));
    row.push(fmt_f64(report.tau.tau3));
    row
}

fn generror_options(
    cfg: &ExperimentConfig,
    finite_width: bool,
    tol: Option<f64>,
) -> Result<GenErrorOptions> {
    Ok(GenErrorOptions {
        finite_width: finite_width.then_some(cfg.p),
        solver: solver_options(tol)?,
        ..GenErrorOptions::default()
    })
}

fn cmd_theory_generror(a: &GenerrorArgs) -> Result<ExitStatus> {
    let cfg = load_config(&a.config)?;
    let (lo, hi, points) = parse_grid(&a.alpha_sweep)?;
    if lo <= 0.0 {
        return Err(Error::Config(format!(
            "α sweep must be positive, got {}",
            a.alpha_sweep
        )));
    }
    let opts = generror_options(&cfg, a.finite_width, a.solver_tol)?;
    let hash = cfg.config_hash();
    let mut manifest = RunManifest::start(&hash, "theory-generror");
    let base = TheoryProblem::from_config(&cfg)?;
    let alphas = crate::spectrum::linear_grid(lo, hi, points);
    let reports: Vec<GenErrorReport> = alphas
        .par_iter()
        .map(|&alpha| asymptotic_generror(&base.with_alpha(alpha), cfg.lambda, &opts))
        .collect::<Result<_>>()?;
    let headers = sweep_headers(cfg.vocab.k());
    let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = alphas
        .iter()
        .zip(&reports)
        .map(|(&alpha, r)| sweep_row(alpha, r, None))
        .collect();
    let meta = json!({
        "config_hash": hash,
        "command": "theory-generror",
        "version": crate::artifacts::ARTIFACT_VERSION,
        "lambda": cfg.lambda,
        "finite_width": opts.finite_width,
    });
    write_csv(&a.out, &meta, &header_refs, &rows)?;
    manifest.outputs.push(a.out.clone());
    write_manifest(&manifest_path(&a.out), manifest)?;
    Ok(ExitStatus::Success)
}

/// One tolerance check of a comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
    pub error: Option<String>,
}

impl CheckOutcome {
    fn measured(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            value: Some(value),
            tolerance,
            passed: value.is_finite() && value < tolerance,
            error: None,
        }
    }

    fn failed(name: &str, tolerance: f64, e: &Error) -> Self {
        Self {
            name: name.into(),
            value: None,
            tolerance,
            passed: false,
            error: Some(e.to_string()),
        }
    }
}

/// Machine-readable outcome of `compare`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub config_hash: String,
    pub seeds: usize,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

/// Theory grid spanning the pooled empirical bulk.
fn bulk_grid(eigs: &[f64]) -> (f64, f64, usize) {
    let mut sorted = eigs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let top = sorted
        .get(((sorted.len() as f64) * 0.999) as usize)
        .or(sorted.last())
        .copied()
        .unwrap_or(1.0);
    (0.0, 1.25 * top.max(1e-3), 400)
}

/// Histogram of `eigs` on `bins` equal bins over `[lo, hi]`, as a density.
fn histogram(eigs: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64)> {
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in eigs {
        if x >= lo && x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
    }
    let total = eigs.len() as f64;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 / (total * width)))
        .collect()
}

fn compare_spectrum(
    cfg: &ExperimentConfig,
    runs: &[RunArtifact],
    grid: Option<&str>,
    jobs: usize,
    out: &Path,
) -> Result<f64> {
    let k = cfg.vocab.k();
    let bulk: Vec<f64> = runs
        .iter()
        .flat_map(|r| nonzero_bulk(&r.eigenvalues, cfg.n, k))
        .collect();
    let (lo, hi, points) = match grid {
        Some(g) => parse_grid(g)?,
        None => bulk_grid(&bulk),
    };
    let problem = TheoryProblem::from_config(cfg)?;
    let curve = density_grid_cached(
        &problem,
        lo,
        hi,
        points,
        &DEFAULT_EPS_SCHEDULE,
        &SolverOptions::default(),
        jobs,
        None,
    )?;
    write_density(&out.join("theory_density.csv"), cfg, "compare", &curve)?;
    let hist = histogram(&bulk, lo, hi, 80);
    let rows: Vec<Vec<String>> = hist
        .iter()
        .map(|(c, d)| vec![fmt_f64(*c), fmt_f64(*d)])
        .collect();
    write_csv(
        &out.join("empirical_histogram.csv"),
        &json!({"config_hash": cfg.config_hash(), "command": "compare", "eigenvalues": bulk.len()}),
        &["lambda", "density"],
        &rows,
    )?;
    Ok(ks_distance(&curve, &bulk))
}

fn compare_generror(
    cfg: &ExperimentConfig,
    runs: &[RunArtifact],
    finite_width: bool,
    out: &Path,
) -> Result<f64> {
    let opts = generror_options(cfg, finite_width, None)?;
    let problem = TheoryProblem::from_config(cfg)?;
    let report = asymptotic_generror(&problem, cfg.lambda, &opts)?;
    let sim = aggregate(cfg, runs).gen_error;
    let headers = sweep_headers(cfg.vocab.k());
    let header_refs: Vec<&str> = headers.iter().map(String::as_str).collect();
    write_csv(
        &out.join("generror.csv"),
        &json!({"config_hash": cfg.config_hash(), "command": "compare", "lambda": cfg.lambda}),
        &header_refs,
        &[sweep_row(cfg.alpha(), &report, Some(&sim))],
    )?;
    Ok((report.error - sim.mean).abs() / sim.mean.abs())
}

fn cmd_compare(a: &CompareArgs, jobs: usize) -> Result<ExitStatus> {
    let cfg = load_config(&a.config)?;
    for (name, tol) in [("--ks-tol", a.ks_tol), ("--gen-tol", a.gen_tol)] {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {tol}")));
        }
    }
    if let Some(g) = &a.grid {
        parse_grid(g)?;
    }
    ensure_dir(&a.out)?;
    let hash = cfg.config_hash();
    let mut manifest = RunManifest::start(&hash, "compare");
    let opts = SimulationOptions {
        mode: a.mode.into(),
        n_test: a.n_test,
        spectrum: true,
    };
    let mut checks = Vec::new();
    match simulate_seeds(&cfg, a.seeds, &opts) {
        Ok(runs) => {
            write_json(&a.out.join("aggregate.json"), &aggregate(&cfg, &runs))?;
            checks.push(
                match compare_spectrum(&cfg, &runs, a.grid.as_deref(), jobs, &a.out) {
                    Ok(ks) => CheckOutcome::measured("spectrum_ks", ks, a.ks_tol),
                    Err(e) => CheckOutcome::failed("spectrum_ks", a.ks_tol, &e),
                },
            );
            checks.push(
                match compare_generror(&cfg, &runs, a.finite_width, &a.out) {
                    Ok(gap) => CheckOutcome::measured("gen_error_relative_gap", gap, a.gen_tol),
                    Err(e) => CheckOutcome::failed("gen_error_relative_gap", a.gen_tol, &e),
                },
            );
        }
        Err(e) => {
            checks.push(CheckOutcome::failed("spectrum_ks", a.ks_tol, &e));
            checks.push(CheckOutcome::failed(
                "gen_error_relative_gap",
                a.gen_tol,
                &e,
            ));
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    let summary = CompareSummary {
        config_hash: hash,
        seeds: a.seeds,
        checks,
        passed,
    };
    for c in &summary.checks {
        let value = c
            .value
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"));
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {} = {value} (tolerance {})", c.name, c.tolerance);
        if let Some(e) = &c.error {
            println!("     {e}");
        }
    }
    let path = a.out.join("summary.json");
    write_json(&path, &summary)?;
    manifest.outputs.push(path);
    write_manifest(&a.out.join("manifest.json"), manifest)?;
    Ok(if passed {
        ExitStatus::Success
    } else {
        ExitStatus::ToleranceFailure
    })
}
