//! Acceptance gate: ten criteria, one `[PASS]`/`[FAIL]` line each. Runtime
//! limits are part of each criterion.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;

use alexbary::barycenter::{exp_bary_residual, per_point_first_order, solve, SolveOptions};
use alexbary::cli::{fixture_names, load_config, run_check, CheckName, CheckParams, CheckSpec, ConfigSource};
use alexbary::measures::{random_measure, FiniteMeasure};
use alexbary::rng::{seeded, stream};
use alexbary::spaces::{sample_point, Bounds, Point, SpaceDescriptor};
use alexbary::verify::{
    linearity_check, opposite_search, sweeps, ustat_rate, OppositeConfig, RateOptions, VerificationReport,
};
use alexbary::TieBreak;

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        summary: summary.into(),
    }
}

fn families() -> Vec<(&'static str, SpaceDescriptor)> {
    vec![
        ("euclidean", SpaceDescriptor::euclidean(3)),
        ("sphere", SpaceDescriptor::sphere(2, 1.0)),
        ("hyperbolic", SpaceDescriptor::hyperbolic(2, -1.0)),
        ("cone", SpaceDescriptor::flat_cone(1.5 * PI)),
        (
            "product",
            SpaceDescriptor::product(SpaceDescriptor::flat_cone(PI), SpaceDescriptor::sphere(1, 2.0)),
        ),
    ]
}

fn smooth_families() -> Vec<(&'static str, SpaceDescriptor)> {
    vec![
        ("euclidean", SpaceDescriptor::euclidean(3)),
        ("sphere", SpaceDescriptor::sphere(2, 1.0)),
        ("hyperbolic", SpaceDescriptor::hyperbolic(3, -0.5)),
        (
            "product",
            SpaceDescriptor::product(SpaceDescriptor::sphere(2, 1.5), SpaceDescriptor::hyperbolic(1, -1.0)),
        ),
    ]
}

/// Cone distance by unrolling the sector between the two rays into the
/// plane and measuring the chord; rays more than `pi` apart meet through
/// the apex.
fn unrolled_cone_distance(theta: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let raw = (a.1 - b.1).abs() % theta;
    let gap = raw.min(theta - raw);
    if gap >= PI {
        return a.0 + b.0;
    }
    let (x0, y0) = (a.0, 0.0);
    let (x1, y1) = (b.0 * gap.cos(), b.0 * gap.sin());
    ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt()
}

fn cone_unroll_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, theta) in [0.5 * PI, PI, 1.5 * PI, 2.0 * PI].into_iter().enumerate() {
        let s = SpaceDescriptor::flat_cone(theta);
        let mut rng = seeded(100 + k as u64);
        for _ in 0..1000 {
            let a = (rng.random_range(0.0..2.0), rng.random_range(0.0..theta));
            let b = (rng.random_range(0.0..2.0), rng.random_range(0.0..theta));
            let p = s.point(vec![a.0, a.1]).unwrap();
            let q = s.point(vec![b.0, b.1]).unwrap();
            let d = s.distance(&p, &q).unwrap();
            worst = worst.max((d - unrolled_cone_distance(theta, a, b)).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max |d - d_unrolled| = {worst:.3e} over 4x1000 pairs"))
}

fn sweep_all(
    label: &str,
    sweep: fn(&SpaceDescriptor, &Bounds, usize, u64, f64) -> alexbary::error::Result<VerificationReport>,
    spaces: Vec<(&'static str, SpaceDescriptor)>,
    seed: u64,
) -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, (name, s)) in spaces.iter().enumerate() {
        let r = sweep(s, &Bounds::default_for(s), 1000, seed + i as u64, 1e-9).unwrap();
        passed &= r.passed && r.margin >= -1e-9;
        parts.push(format!("{name} {:.2e}", r.margin));
    }
    outcome(passed, format!("{label} min margin per family: {}", parts.join(", ")))
}

fn barycenter_residuals() -> Outcome {
    let opts = SolveOptions::default();
    let mut passed = true;
    let mut parts = Vec::new();
    for (k, (name, s)) in smooth_families().into_iter().enumerate() {
        let bounds = Bounds::default_for(&s);
        let (mut worst_res, mut worst_fo, mut failures) = (0.0f64, 0.0f64, 0);
        for i in 0..100 {
            let mut rng = stream(400 + k as u64, i);
            let n = rng.random_range(2..=6);
            let q = random_measure(&s, &bounds, n, true, &mut rng).unwrap();
            match solve(&s, &q, &opts) {
                Ok(sol) => {
                    worst_res = worst_res.max(sol.residual);
                    for x in q.support() {
                        worst_fo = worst_fo.max(per_point_first_order(&s, &q, &sol.point, x).unwrap().abs());
                    }
                }
                Err(_) => failures += 1,
            }
        }
        passed &= failures == 0 && worst_res <= 1e-6 && worst_fo <= 1e-6;
        parts.push(format!("{name}: {failures} unconverged, residual {worst_res:.1e}, first-order {worst_fo:.1e}"));
    }
    outcome(passed, parts.join("; "))
}

fn cone_contrapositive() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for (k, theta) in [0.5 * PI, PI, 1.5 * PI].into_iter().enumerate() {
        let r = sweeps::cone_apex_sweep(theta, 1.0, 200, 500 + k as u64, &SolveOptions::default()).unwrap();
        passed &= r.margin > 0.0;
        parts.push(format!("theta {:.2}pi margin {:.3e}", theta / PI, r.margin));
    }
    outcome(passed, parts.join(", "))
}

/// Random measure whose atoms have tangent logs at least `sep` apart and
/// away from the barycenter, so that the smallest ball isolates one atom.
fn separated_instance(s: &SpaceDescriptor, seed: u64, trial: u64, sep: f64) -> (FiniteMeasure, Point) {
    let bounds = Bounds::default_for(s);
    let opts = SolveOptions::default();
    for attempt in 0.. {
        let mut rng = stream(seed, trial * 1000 + attempt);
        let n = rng.random_range(3..=5);
        let q = random_measure(s, &bounds, n, true, &mut rng).unwrap();
        let Ok(sol) = solve(s, &q, &opts) else { continue };
        let logs: Vec<_> = q
            .support()
            .iter()
            .map(|x| s.log_map_with(&sol.point, x, TieBreak::Lexicographic).unwrap())
            .collect();
        let apart = logs.iter().enumerate().all(|(i, u)| {
            u.magnitude() >= sep && logs[i + 1..].iter().all(|v| u.distance(v).unwrap() >= sep)
        });
        if q.len() == n && apart {
            return (q, sol.point);
        }
    }
    unreachable!()
}

fn opposite_realisation() -> Outcome {
    let mut worst_cos: f64 = -1.0;
    let mut worst_limit: f64 = 0.0;
    let mut passed = true;
    let fams = smooth_families();
    for i in 0..20u64 {
        let (_, s) = &fams[i as usize % fams.len()];
        let (q, b) = separated_instance(s, 600, i, 0.15);
        let x = q.support()[0].clone();
        let cfg = OppositeConfig {
            seed: 6000 + i,
            ..OppositeConfig::default()
        };
        let out = opposite_search(s, &q, &b, &x, &cfg).unwrap();
        let limit = out.limit_defect.unwrap_or(f64::INFINITY);
        worst_cos = worst_cos.max(out.cos_angle);
        worst_limit = worst_limit.max(limit);
        passed &= out.cos_angle <= -1.0 + 1e-3 && limit <= 1e-3 && out.report.passed;
    }
    outcome(
        passed,
        format!("20 instances: worst cos {worst_cos:.9}, worst |limit + log_b x| {worst_limit:.3e}"),
    )
}

fn ustat_rates() -> Outcome {
    let opts = RateOptions {
        seed: 700,
        ..RateOptions::default()
    };
    assert_eq!(opts.reps, 200);
    assert_eq!(opts.n_schedule, vec![10, 20, 40, 80, 160, 320, 640, 1280]);
    let mut passed = true;
    let mut parts = Vec::new();
    for name in ["planar_rate", "sphere", "hyperbolic", "product"] {
        let exp = load_config(&ConfigSource::Fixture(name.into())).unwrap().build().unwrap();
        let s = &exp.space;
        let base = exp.base();
        let logs: Vec<_> = exp
            .measure
            .support()
            .iter()
            .map(|x| s.log_map_with(&base, x, TieBreak::Lexicographic).unwrap())
            .collect();
        let idx = |x: &Point| exp.measure.support().iter().position(|p| p == x).unwrap();
        let r = ustat_rate(&exp.measure, |x, y| logs[idx(x)].inner(&logs[idx(y)]).unwrap(), &opts).unwrap();
        let k = r.slope.unwrap_or(f64::NAN);
        passed &= (-1.3..=-0.7).contains(&k);
        parts.push(format!("{name} {k:.3}±{:.3}", r.half_width));
    }
    outcome(passed, format!("slopes: {}", parts.join(", ")))
}

fn linearity() -> Outcome {
    let sweep = sweep_all("midpoint", sweeps::linearity_sweep, smooth_families(), 800);
    let opts = SolveOptions::default();
    let fams = smooth_families();
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for i in 0..50u64 {
        let (_, s) = &fams[i as usize % fams.len()];
        let bounds = Bounds::default_for(s);
        let mut rng = stream(810, i);
        let n = rng.random_range(2..=6);
        let q = random_measure(s, &bounds, n, true, &mut rng).unwrap();
        let b = solve(s, &q, &opts).unwrap().point;
        let logs: Vec<_> = q
            .support()
            .iter()
            .map(|x| s.log_map_with(&b, x, TieBreak::Lexicographic).unwrap())
            .collect();
        let y = sample_point(s, &bounds, &mut rng).unwrap();
        let b_vec = s.log_map(&b, &y).unwrap();
        let r = linearity_check(&b_vec, &logs, &[0.5], Some(q.weights()), 1e-9, 1e-6, i).unwrap();
        let integral = r.details["weighted_integral"].as_f64().unwrap().abs();
        worst = worst.max(integral);
        ok &= r.passed && integral <= 1e-6;
        ok &= exp_bary_residual(s, &q, &b).unwrap() <= 1e-12;
    }
    outcome(
        sweep.passed && ok,
        format!("{}; max |∫<x, b> dP| = {worst:.2e} over 50 solved instances", sweep.summary),
    )
}

fn subadd_and_approx() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for name in fixture_names() {
        let exp = load_config(&ConfigSource::Fixture(name.into())).unwrap().build().unwrap();
        let b = solve(&exp.space, &exp.measure, &exp.config.solve).unwrap().point;
        for check in [CheckName::Subadd, CheckName::Approx] {
            let spec = CheckSpec {
                name: check,
                tolerance: None,
                params: CheckParams::default(),
            };
            let r = run_check(&exp, &b, &spec).unwrap();
            let searched = r.details.keys().any(|k| k.ends_with("search_failure"));
            passed &= r.passed && !searched;
            if !r.passed || searched {
                parts.push(format!("{name}/{check} margin {:.3e}", r.margin));
            }
        }
    }
    let summary = if parts.is_empty() {
        format!("{} fixtures, no search failure, approximation bounds within slacks", fixture_names().len())
    } else {
        format!("failing: {}", parts.join(", "))
    };
    outcome(passed, summary)
}

fn main() -> ExitCode {
    type Criterion = (&'static str, Duration, Box<dyn Fn() -> Outcome>);
    let criteria: Vec<Criterion> = vec![
        ("cone distance matches unrolling", Duration::from_secs(5), Box::new(cone_unroll_oracle)),
        (
            "comparison inequality",
            Duration::from_secs(30),
            Box::new(|| sweep_all("comparison", sweeps::comparison_sweep, families(), 200)),
        ),
        (
            "Gram sums nonnegative",
            Duration::from_secs(30),
            Box::new(|| sweep_all("gram", sweeps::gram_sweep, families(), 300)),
        ),
        ("exponential-barycenter residual", Duration::from_secs(120), Box::new(barycenter_residuals)),
        ("cone apex is never the barycenter", Duration::from_secs(120), Box::new(cone_contrapositive)),
        ("opposite realisation", Duration::from_secs(300), Box::new(opposite_realisation)),
        ("U-statistic rate", Duration::from_secs(180), Box::new(ustat_rates)),
        ("linearity on Lin", Duration::from_secs(60), Box::new(linearity)),
        (
            "parallelogram law",
            Duration::from_secs(5),
            Box::new(|| sweep_all("parallelogram", sweeps::parallelogram_sweep, families(), 900)),
        ),
        ("subadditive combination and approximation", Duration::from_secs(300), Box::new(subadd_and_approx)),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let ok = out.passed && elapsed < *limit;
        failed += usize::from(!ok);
        println!(
            "[{}] {:>2}. {name}: {} ({:.2} s, limit {} s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            out.summary,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
