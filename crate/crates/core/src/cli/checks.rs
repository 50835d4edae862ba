//! Dispatch from check names to the verification routines.

use super::config::{CheckName, CheckSpec, Experiment, Kernel};
use crate::error::{GeometryError, Result, VerifyError};
use crate::rng::derive_seed;
use crate::spaces::{Point, SpaceDescriptor};
use crate::tangent::{TangentVector, TieBreak};
use crate::verify::{
    approx_schedule, approx_sequence, first_order_report, lang_schroeder_report, linearity_check, mixture_report, opposite_search,
    parallelogram_defect, subadditive_combine, support_in_lin_check, sweeps, ustat_rate, ApproxConfig,
    OppositeConfig, RateOptions, APPROX_REPLICATES, RateResult, VerificationReport, DEFAULT_EPS_SCHEDULE,
};

const DEFAULT_TRIALS: usize = 1000;

/// Runs one check at the solved barycenter `b`. Search failures become
/// failing reports; other errors are input errors.
pub fn run_check(exp: &Experiment, b: &Point, spec: &CheckSpec) -> std::result::Result<VerificationReport, VerifyError> {
    let s = &exp.space;
    let p = &exp.measure;
    let tol = spec.tolerance();
    let prm = &spec.params;
    let seed = derive_seed(exp.config.seed, spec.name as u64);
    let trials = prm.trials.unwrap_or(DEFAULT_TRIALS);
    let name = spec.name.as_str();
    let report = match spec.name {
        CheckName::LangSchroeder => {
            let mut reports = vec![lang_schroeder_report(s, b, p, tol, seed)?.with("base", "barycenter")];
            for x in p.support() {
                reports.push(lang_schroeder_report(s, x, p, tol, seed)?.with("base", "atom"));
            }
            reports.push(sweeps::gram_sweep(s, &exp.bounds, trials, seed, tol)?);
            VerificationReport::worst_of(name, tol, seed, reports)
        }
        CheckName::FirstOrder => first_order_report(s, p, b, tol, seed)?,
        CheckName::Mixture => {
            let eps = prm.eps_schedule.clone().unwrap_or_else(|| DEFAULT_EPS_SCHEDULE.to_vec());
            mixture_report(s, p, b, &eps, tol, prm.bary_tol.unwrap_or(1e-8), seed)?
        }
        CheckName::UstatRate => {
            let (opts, r) = rate(exp, spec)?;
            r.report(opts.slope_band, tol, seed)
        }
        CheckName::Subadd => subadd(s, p, b, prm.eps.unwrap_or(1e-3), tol, seed)?,
        CheckName::Approx => {
            let logs = logs_at(s, p.support(), b)?;
            let mut reports = Vec::new();
            for (i, x) in p.support().iter().enumerate() {
                let cfg = ApproxConfig {
                    ball_center: x.clone(),
                    ball_radius: prm.delta.unwrap_or_else(|| default_radius(&logs, i)),
                    test_set: logs.clone(),
                    epsilon_schedule: vec![prm.eps.unwrap_or(1e-3)],
                    n_schedule: prm.n_schedule.clone().unwrap_or_else(approx_schedule),
                    replicates: prm.replicates.unwrap_or(APPROX_REPLICATES),
                    seed: derive_seed(seed, i as u64),
                    inner_slack: prm.inner_slack.unwrap_or(0.05),
                    norm_rel_tol: prm.norm_rel_tol.unwrap_or(0.05),
                    norm_abs_slack: 1e-3,
                };
                let r = match approx_sequence(s, p, b, &cfg) {
                    Ok(out) => out.report,
                    Err(VerifyError::Search(f)) => search_failure_report(name, &f, tol, seed),
                    Err(e) => return Err(e),
                };
                reports.push(retolerate(r, tol).with("atom", i));
            }
            VerificationReport::worst_of(name, tol, seed, reports)
        }
        CheckName::Opposite => {
            let mut reports = Vec::new();
            for (i, x) in p.support().iter().enumerate() {
                if s.distance(b, x)? <= 0.0 {
                    continue;
                }
                let mut cfg = OppositeConfig {
                    seed: derive_seed(seed, i as u64),
                    ..OppositeConfig::default()
                };
                if let Some(d) = &prm.delta_schedule {
                    cfg.delta_schedule = d.clone();
                }
                if let Some(n) = &prm.n_schedule {
                    cfg.n_schedule = n.clone();
                }
                if let Some(r) = prm.replicates {
                    cfg.replicates = r;
                }
                if let Some(t) = prm.tol_angle {
                    cfg.tol_angle = t;
                }
                if let Some(t) = prm.limit_tol {
                    cfg.limit_tol = t;
                }
                if let Some(e) = prm.eps {
                    cfg.epsilon_schedule = vec![e];
                }
                let r = match opposite_search(s, p, b, x, &cfg) {
                    Ok(out) => out.report,
                    Err(VerifyError::Search(f)) => search_failure_report(name, &f, tol, seed),
                    Err(e) => return Err(e),
                };
                reports.push(retolerate(r, tol).with("atom", i));
            }
            if reports.is_empty() {
                VerificationReport::new(name, 0.0, tol, seed).with("atoms_checked", 0)
            } else {
                VerificationReport::worst_of(name, tol, seed, reports)
            }
        }
        CheckName::SupportLin => support_in_lin_check(s, p, b, tol, seed)?,
        CheckName::Linearity => {
            let mut reports = Vec::new();
            let logs = logs_at(s, p.support(), b)?;
            if logs.iter().all(|v| v.tangent.is_linear()) {
                let t_grid = prm.t_grid.clone().unwrap_or_else(|| vec![0.25, 0.5, 0.75]);
                let integral_tol = prm.integral_tol.unwrap_or(1e-6);
                for bv in &logs {
                    reports.push(linearity_check(bv, &logs, &t_grid, Some(p.weights()), tol, integral_tol, seed)?);
                }
            }
            reports.push(sweeps::linearity_sweep(s, &exp.bounds, trials, seed, tol)?);
            VerificationReport::worst_of(name, tol, seed, reports)
        }
        CheckName::Parallelogram => {
            let mut reports = Vec::new();
            let logs = logs_at(s, p.support(), b)?;
            if logs.iter().all(|v| v.tangent.is_linear()) {
                let mut worst: f64 = 0.0;
                for u in &logs {
                    for v in &logs {
                        worst = worst.max(parallelogram_defect(u, v)?);
                    }
                }
                reports.push(VerificationReport::new(name, -worst, tol, seed).with("support_defect", worst));
            }
            reports.push(sweeps::parallelogram_sweep(s, &exp.bounds, trials, seed, tol)?);
            VerificationReport::worst_of(name, tol, seed, reports)
        }
        CheckName::Comparison => sweeps::comparison_sweep(s, &exp.bounds, trials, seed, tol)?,
    };
    Ok(report)
}

fn rate_options(exp: &Experiment, spec: &CheckSpec) -> RateOptions {
    let mut opts = RateOptions {
        seed: derive_seed(exp.config.seed, CheckName::UstatRate as u64),
        ..RateOptions::default()
    };
    if let Some(n) = &spec.params.n_schedule {
        opts.n_schedule = n.clone();
    }
    if let Some(r) = spec.params.reps {
        opts.reps = r;
    }
    opts
}

/// U-statistic rate of the kernel named in `spec`, with the options it
/// resolves to. A degenerate measure is an input error.
pub fn rate(exp: &Experiment, spec: &CheckSpec) -> Result<(RateOptions, RateResult)> {
    let s = &exp.space;
    let opts = &rate_options(exp, spec);
    let kernel = spec.params.kernel.unwrap_or_default();
    let base = exp.base();
    let r = match kernel {
        Kernel::Inner => {
            let logs: Vec<(Point, TangentVector)> = exp
                .measure
                .support()
                .iter()
                .map(|x| Ok((x.clone(), s.log_map_with(&base, x, TieBreak::Lexicographic)?)))
                .collect::<Result<_>>()?;
            let find = |x: &Point| &logs.iter().find(|(p, _)| p == x).expect("atom").1;
            ustat_rate(&exp.measure, |x, y| find(x).inner(find(y)).unwrap_or(f64::NAN), opts)?
        }
        Kernel::DistanceSq => ustat_rate(&exp.measure, |x, y| s.dist_sq(x, y), opts)?,
    };
    if r.degenerate {
        return Err(GeometryError::input(
            "degenerate measure: the V-statistic has zero variance, so no rate can be fitted",
        ));
    }
    if r.mse.iter().any(|e| !e.is_finite()) {
        return Err(GeometryError::input("kernel is not finite on the support"));
    }
    Ok((opts.clone(), r))
}

fn logs_at(s: &SpaceDescriptor, xs: &[Point], b: &Point) -> Result<Vec<TangentVector>> {
    xs.iter().map(|x| s.log_map_with(b, x, TieBreak::Lexicographic)).collect()
}

/// Half the tangent distance from atom `i` to the nearest other atom.
fn default_radius(logs: &[TangentVector], i: usize) -> f64 {
    let mut d = f64::INFINITY;
    for (j, v) in logs.iter().enumerate() {
        if j != i {
            d = d.min(logs[i].distance(v).unwrap_or(f64::INFINITY));
        }
    }
    if d.is_finite() && d > 0.0 {
        0.5 * d
    } else {
        0.5
    }
}

/// Combines the weighted logs `w_i log_b x_i` against the logs themselves,
/// at `b` and, on a cone, also at the apex.
fn subadd(
    s: &SpaceDescriptor,
    p: &crate::measures::FiniteMeasure,
    b: &Point,
    eps: f64,
    tol: f64,
    seed: u64,
) -> std::result::Result<VerificationReport, VerifyError> {
    let mut bases = vec![b.clone()];
    if let Some(apex) = s.apex() {
        if s.distance(&apex, b)? > 0.0 {
            bases.push(apex);
        }
    }
    let mut reports = Vec::new();
    for base in &bases {
        let us = logs_at(s, p.support(), base)?;
        let xs: Vec<TangentVector> = us.iter().zip(p.weights()).map(|(u, w)| u.scaled(*w)).collect();
        let r = match subadditive_combine(s, base, &xs, &us, eps) {
            Ok(y) => {
                let mut inner_violation = f64::NEG_INFINITY;
                for u in &us {
                    let bound: f64 = xs.iter().map(|x| x.inner(u)).sum::<Result<f64>>()?;
                    inner_violation = inner_violation.max(y.inner(u)? - bound);
                }
                let mut gram = 0.0;
                for x in &xs {
                    for z in &xs {
                        gram += x.inner(z)?;
                    }
                }
                let norm_violation = y.tangent.norm_sq() - gram;
                VerificationReport::composite("subadd", &[(inner_violation, eps), (norm_violation, eps)], tol, seed)
                    .with("inner_violation", inner_violation)
                    .with("norm_violation", norm_violation)
            }
            Err(VerifyError::Search(f)) => search_failure_report("subadd", &f, tol, seed),
            Err(e) => return Err(e),
        };
        reports.push(r.with("singular_base", s.is_singular(base)));
    }
    Ok(VerificationReport::worst_of("subadd", tol, seed, reports).with("eps", eps))
}

fn search_failure_report(
    name: &str,
    f: &crate::error::SearchFailure,
    tol: f64,
    seed: u64,
) -> VerificationReport {
    let violation = f.inner_violation.max(f.norm_violation);
    let margin = if violation.is_finite() { -violation.abs().max(tol) - tol } else { -1.0 };
    VerificationReport::new(name, margin, tol, seed)
        .with("search_failure", true)
        .with("inner_violation", f.inner_violation)
        .with("norm_violation", f.norm_violation)
}

/// Rebinds a report produced with an internal tolerance to the check's.
fn retolerate(mut r: VerificationReport, tol: f64) -> VerificationReport {
    r.margin += r.tolerance - tol;
    r.tolerance = tol;
    r.passed = r.margin >= -tol;
    r
}
