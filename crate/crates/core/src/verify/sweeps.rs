//! Randomised sweeps of the pointwise checks. Trials run in parallel with
//! per-trial streams derived from the master seed; reductions keep trial
//! order so results do not depend on scheduling.

use rand::Rng as _;
use rayon::prelude::*;

use super::{lang_schroeder_gram, linearity_check, parallelogram_defect, VerificationReport};
use crate::barycenter::{exp_bary_residual, solve, SolveOptions};
use crate::error::{Result, SolveError, VerifyError};
use crate::measures::random_measure;
use crate::rng::{stream, Rng};
use crate::spaces::{comparison_margin, sample_point, Bounds, Point, SpaceDescriptor};
use crate::tangent::TangentVector;

fn worst(trials: usize, seed: u64, f: impl Fn(usize, &mut Rng) -> Result<f64> + Sync) -> Result<(f64, usize)> {
    let out: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            f(i, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut min = (f64::INFINITY, 0);
    for (i, &m) in out.iter().enumerate() {
        if m < min.0 || m.is_nan() {
            min = (m, i);
        }
    }
    Ok(min)
}

/// `d(y, x_t) - d(y~, x_t~)` over random triangles and random `t`.
pub fn comparison_sweep(
    s: &SpaceDescriptor,
    bounds: &Bounds,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<VerificationReport> {
    bounds.validate(s)?;
    let (margin, at) = worst(trials, seed, |_, rng| {
        let x0 = sample_point(s, bounds, rng)?;
        let x1 = sample_point(s, bounds, rng)?;
        let y = sample_point(s, bounds, rng)?;
        let t: f64 = rng.random();
        Ok(comparison_margin(s, &x0, &x1, &y, t)?)
    })?;
    Ok(VerificationReport::new("comparison", margin, tolerance, seed)
        .with("trials", trials)
        .with("worst_trial", at)
        .with("kappa", s.kappa_lower()))
}

/// Random base point; cones use the apex for every fourth trial.
fn random_base(s: &SpaceDescriptor, bounds: &Bounds, i: usize, rng: &mut Rng) -> Result<Point> {
    match s.apex() {
        Some(apex) if i % 4 == 0 => Ok(apex),
        _ => sample_point(s, bounds, rng),
    }
}

/// Gram sums `sum_{ij} w_i w_j <log_p x_i, log_p x_j>` for random bases and
/// measures with one to six atoms.
pub fn gram_sweep(
    s: &SpaceDescriptor,
    bounds: &Bounds,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<VerificationReport> {
    bounds.validate(s)?;
    let (margin, at) = worst(trials, seed, |i, rng| {
        let p = random_base(s, bounds, i, rng)?;
        let n = rng.random_range(1..=6);
        let q = random_measure(s, bounds, n, true, rng)?;
        Ok(lang_schroeder_gram(s, &p, &q)?)
    })?;
    Ok(VerificationReport::new("lang-schroeder", margin, tolerance, seed)
        .with("trials", trials)
        .with("worst_trial", at))
}

fn random_log(s: &SpaceDescriptor, bounds: &Bounds, b: &Point, rng: &mut Rng) -> Result<TangentVector> {
    let x = sample_point(s, bounds, rng)?;
    let v = s.log_map(b, &x)?;
    Ok(v.scaled(rng.random_range(0.1..1.5)))
}

/// Random base away from singular points.
fn smooth_base(s: &SpaceDescriptor, bounds: &Bounds, rng: &mut Rng) -> Result<Point> {
    loop {
        let p = sample_point(s, bounds, rng)?;
        if !s.is_singular(&p) {
            return Ok(p);
        }
    }
}

/// Parallelogram law for pairs of tangent vectors at random smooth points.
pub fn parallelogram_sweep(
    s: &SpaceDescriptor,
    bounds: &Bounds,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<VerificationReport> {
    bounds.validate(s)?;
    let (margin, at) = worst(trials, seed, |_, rng| {
        let b = smooth_base(s, bounds, rng)?;
        let u = random_log(s, bounds, &b, rng)?;
        let v = random_log(s, bounds, &b, rng)?;
        Ok(-parallelogram_defect(&u, &v)?)
    })?;
    Ok(VerificationReport::new("parallelogram", margin, tolerance, seed)
        .with("trials", trials)
        .with("worst_trial", at))
}

/// Midpoint linearity of `<., b>` for random triples `(b, x0, x1)` at random
/// smooth points.
pub fn linearity_sweep(
    s: &SpaceDescriptor,
    bounds: &Bounds,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<VerificationReport> {
    bounds.validate(s)?;
    let (margin, at) = worst(trials, seed, |_, rng| {
        let b = smooth_base(s, bounds, rng)?;
        let bv = random_log(s, bounds, &b, rng)?;
        let xs = [random_log(s, bounds, &b, rng)?, random_log(s, bounds, &b, rng)?];
        let t: f64 = rng.random();
        let r = linearity_check(&bv, &xs, &[t, 0.5], None, tolerance, 1.0, 0)?;
        Ok(r.margin)
    })?;
    Ok(VerificationReport::new("linearity", margin, tolerance, seed)
        .with("trials", trials)
        .with("worst_trial", at))
}

/// For random non-Dirac measures on a cone with total angle below `2pi`,
/// the solved barycenter is not the apex and the exponential-barycenter
/// residual at the apex is strictly positive. The margin is the smaller of
/// the least apex residual and the least distance of a solution to the apex.
pub fn cone_apex_sweep(
    total_angle: f64,
    rho_max: f64,
    trials: usize,
    seed: u64,
    opts: &SolveOptions,
) -> std::result::Result<VerificationReport, VerifyError> {
    let s = SpaceDescriptor::flat_cone(total_angle);
    s.validate()?;
    let bounds = Bounds::Disk { rho_max };
    bounds.validate(&s)?;
    let apex = s.apex().expect("cone");
    let out: Vec<std::result::Result<(f64, f64), VerifyError>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let q = loop {
                let n = rng.random_range(2..=6);
                let q = random_measure(&s, &bounds, n, true, &mut rng)?;
                if q.len() >= 2 {
                    break q;
                }
            };
            let residual = exp_bary_residual(&s, &q, &apex)?;
            let sol = match solve(&s, &q, opts) {
                Ok(sol) => sol,
                Err(SolveError::NonConvergence { last, .. }) => *last,
                Err(e) => return Err(e.into()),
            };
            Ok((residual, s.dist(&sol.point, &apex)))
        })
        .collect();
    let mut min_res = f64::INFINITY;
    let mut min_dist = f64::INFINITY;
    for r in out {
        let (res, d) = r?;
        min_res = min_res.min(res);
        min_dist = min_dist.min(d);
    }
    Ok(VerificationReport::new("cone-apex", min_res.min(min_dist), 0.0, seed)
        .with("trials", trials)
        .with("total_angle", total_angle)
        .with("min_apex_residual", min_res)
        .with("min_distance_to_apex", min_dist))
}
