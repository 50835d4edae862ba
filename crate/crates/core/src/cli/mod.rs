//! Batch commands: read an experiment config, run the solver, the checks or
//! the rate estimate, and write JSON reports and CSV tables.
//!
//! Exit codes: 0 success, 1 a failed check / no convergence / slope out of
//! band, 2 invalid input.

mod checks;
mod config;
mod fixtures;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::barycenter::{frechet_value, solve, Method, Solution};
use crate::error::SolveError;
use crate::spaces::Point;

pub use checks::{rate, run_check};
pub use config::{CheckName, CheckParams, CheckSpec, Experiment, ExperimentConfig, Kernel, MeasureSpec};
pub use fixtures::{fixture, fixture_names, FIXTURES};

/// Environment variable naming the output directory when neither the
/// command line nor the config sets one.
pub const OUT_DIR_ENV: &str = "ALEXBARY_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Where a config comes from.
#[derive(Clone, Debug)]
pub enum ConfigSource {
    File(PathBuf),
    Fixture(String),
}

/// An input problem, reported on stderr with exit code 2.
#[derive(Debug)]
pub struct InputError(pub String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<crate::error::GeometryError> for InputError {
    fn from(e: crate::error::GeometryError) -> Self {
        InputError(e.to_string())
    }
}

impl From<std::io::Error> for InputError {
    fn from(e: std::io::Error) -> Self {
        InputError(format!("i/o error: {e}"))
    }
}

pub fn load_config(source: &ConfigSource) -> Result<ExperimentConfig, InputError> {
    let text = match source {
        ConfigSource::File(path) => fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read {}: {e}", path.display())))?,
        ConfigSource::Fixture(name) => fixture(name)
            .ok_or_else(|| {
                InputError(format!(
                    "unknown fixture `{name}`; available: {}",
                    fixture_names().join(", ")
                ))
            })?
            .to_string(),
    };
    ExperimentConfig::from_json(&text).map_err(InputError)
}

/// `--out`, then the config's `output_dir`, then `$ALEXBARY_OUT_DIR`, then `out`.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.output_dir {
        return p.clone();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("out"),
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), InputError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| InputError(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn prepare(source: &ConfigSource, out: Option<&Path>) -> Result<(Experiment, PathBuf), InputError> {
    let cfg = load_config(source)?;
    let exp = cfg.build()?;
    let dir = resolve_out_dir(out, &cfg);
    fs::create_dir_all(&dir)?;
    Ok((exp, dir))
}

fn report_input(e: InputError) -> i32 {
    eprintln!("error: {e}");
    EXIT_INPUT
}

#[derive(Serialize)]
struct BarycenterOut<'a> {
    point: &'a Point,
    residual: f64,
    iterations: usize,
    converged: bool,
    method_used: Method,
    frechet_value: f64,
    warnings: &'a [String],
}

fn trace_csv(sol: &Solution) -> String {
    let k = sol.point.coords().len();
    let mut out = String::from("iter,residual,frechet_value");
    for i in 0..k {
        let _ = write!(out, ",coord_{i}");
    }
    out.push('\n');
    for row in &sol.trace {
        let _ = write!(out, "{},{},{}", row.iter, fmt_f64(row.residual), fmt_f64(row.frechet_value));
        for c in &row.coords {
            let _ = write!(out, ",{}", fmt_f64(*c));
        }
        out.push('\n');
    }
    out
}

/// Solves for the barycenter and writes `barycenter.json` and `trace.csv`.
pub fn cmd_solve(source: &ConfigSource, out: Option<&Path>) -> i32 {
    match run_solve(source, out) {
        Ok(code) => code,
        Err(e) => report_input(e),
    }
}

fn run_solve(source: &ConfigSource, out: Option<&Path>) -> Result<i32, InputError> {
    let (exp, dir) = prepare(source, out)?;
    let (sol, code) = match solve(&exp.space, &exp.measure, &exp.config.solve) {
        Ok(sol) => (sol, EXIT_OK),
        Err(SolveError::NonConvergence { last, iterations, residual }) => {
            eprintln!("no convergence after {iterations} iterations (residual {residual:e})");
            (*last, EXIT_FAIL)
        }
        Err(SolveError::Geometry(e)) => return Err(e.into()),
    };
    let summary = BarycenterOut {
        point: &sol.point,
        residual: sol.residual,
        iterations: sol.iterations,
        converged: sol.converged,
        method_used: sol.method_used,
        frechet_value: frechet_value(&exp.space, &exp.measure, &sol.point),
        warnings: &sol.warnings,
    };
    write_json(&dir, "barycenter.json", &summary)?;
    fs::write(dir.join("trace.csv"), trace_csv(&sol))?;
    for w in &sol.warnings {
        eprintln!("warning: {w}");
    }
    Ok(code)
}

/// Runs the selected checks (all configured ones when `filter` is empty;
/// every check when the config lists none) and writes `<check>.json` per
/// check and `verify.csv`.
pub fn cmd_verify(source: &ConfigSource, filter: &[String], out: Option<&Path>) -> i32 {
    match run_verify(source, filter, out) {
        Ok(code) => code,
        Err(e) => report_input(e),
    }
}

fn select_checks(cfg: &ExperimentConfig, filter: &[String]) -> Result<Vec<CheckSpec>, InputError> {
    let wanted: Vec<CheckName> = filter
        .iter()
        .map(|n| n.parse::<CheckName>().map_err(InputError))
        .collect::<Result<_, _>>()?;
    let default_spec = |name| CheckSpec {
        name,
        tolerance: None,
        params: CheckParams::default(),
    };
    if wanted.is_empty() {
        if cfg.checks.is_empty() {
            return Ok(CheckName::ALL.iter().map(|&n| default_spec(n)).collect());
        }
        return Ok(cfg.checks.clone());
    }
    Ok(wanted
        .into_iter()
        .map(|n| cfg.checks.iter().find(|c| c.name == n).cloned().unwrap_or_else(|| default_spec(n)))
        .collect())
}

fn run_verify(source: &ConfigSource, filter: &[String], out: Option<&Path>) -> Result<i32, InputError> {
    let cfg = load_config(source)?;
    let specs = select_checks(&cfg, filter)?;
    let (exp, dir) = prepare(source, out)?;
    let (b, converged) = match solve(&exp.space, &exp.measure, &exp.config.solve) {
        Ok(sol) => (sol.point, true),
        Err(SolveError::NonConvergence { last, .. }) => {
            eprintln!("warning: solver did not converge; checking at the last iterate");
            (last.point, false)
        }
        Err(SolveError::Geometry(e)) => return Err(e.into()),
    };
    let mut csv = String::from("check_name,passed,margin,tolerance,seed\n");
    let mut all = true;
    for spec in &specs {
        let report = match run_check(&exp, &b, spec) {
            Ok(r) => r.with("barycenter_converged", converged),
            Err(e) => return Err(InputError(format!("check `{}`: {e}", spec.name))),
        };
        all &= report.passed;
        write_json(&dir, &format!("{}.json", spec.name), &report)?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            report.check_name,
            report.passed,
            fmt_f64(report.margin),
            fmt_f64(report.tolerance),
            report.seed
        );
        eprintln!(
            "[{}] {} margin {:e}",
            if report.passed { "PASS" } else { "FAIL" },
            report.check_name,
            report.margin
        );
    }
    fs::write(dir.join("verify.csv"), csv)?;
    Ok(if all { EXIT_OK } else { EXIT_FAIL })
}

#[derive(Serialize)]
struct RateOut<'a> {
    slope: Option<f64>,
    half_width: f64,
    slope_band: (f64, f64),
    in_band: bool,
    target: f64,
    reps: usize,
    n_schedule: &'a [usize],
}

/// Estimates the U-statistic rate and writes `rate.csv` and `rate.json`.
pub fn cmd_rate(source: &ConfigSource, out: Option<&Path>) -> i32 {
    match run_rate(source, out) {
        Ok(code) => code,
        Err(e) => report_input(e),
    }
}

fn run_rate(source: &ConfigSource, out: Option<&Path>) -> Result<i32, InputError> {
    let (exp, dir) = prepare(source, out)?;
    let spec = exp
        .config
        .checks
        .iter()
        .find(|c| c.name == CheckName::UstatRate)
        .cloned()
        .unwrap_or(CheckSpec {
            name: CheckName::UstatRate,
            tolerance: None,
            params: CheckParams::default(),
        });
    let (opts, r) = rate(&exp, &spec)?;
    let mut csv = String::from("n,mse,stderr\n");
    for ((n, m), e) in r.n_schedule.iter().zip(&r.mse).zip(&r.stderr) {
        let _ = writeln!(csv, "{n},{},{}", fmt_f64(*m), fmt_f64(*e));
    }
    fs::write(dir.join("rate.csv"), csv)?;
    let (lo, hi) = opts.slope_band;
    let in_band = r.slope.is_some_and(|k| (lo..=hi).contains(&k));
    write_json(
        &dir,
        "rate.json",
        &RateOut {
            slope: r.slope,
            half_width: r.half_width,
            slope_band: opts.slope_band,
            in_band,
            target: r.target,
            reps: opts.reps,
            n_schedule: &r.n_schedule,
        },
    )?;
    Ok(if in_band { EXIT_OK } else { EXIT_FAIL })
}
