//! Fréchet functional, barycenter solvers and the exponential-barycenter
//! residual `∫∫ <x, y>_b dP⊗P`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result, SolveError};
use crate::measures::{log_pushforward, FiniteMeasure};
use crate::spaces::{Point, SpaceDescriptor};
use crate::tangent::{Tangent, TieBreak};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Karcher,
    GridRefine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    pub method: Method,
    pub max_iter: usize,
    pub step_tol: f64,
    pub grid_resolution: usize,
    pub include_apex_candidate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::Karcher,
            max_iter: 200,
            step_tol: 1e-10,
            grid_resolution: 64,
            include_apex_candidate: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(GeometryError::input("max_iter must be at least 1"));
        }
        if !(self.step_tol.is_finite() && self.step_tol > 0.0) {
            return Err(GeometryError::input(format!(
                "step_tol must be positive, got {}",
                self.step_tol
            )));
        }
        if self.grid_resolution < 8 {
            return Err(GeometryError::input(format!(
                "grid_resolution must be at least 8, got {}",
                self.grid_resolution
            )));
        }
        Ok(())
    }
}

/// One row of a solver trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub residual: f64,
    pub frechet_value: f64,
    pub coords: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub point: Point,
    /// `|sum_i w_i log_b x_i|`, or `sqrt` of the exponential-barycenter
    /// residual where no linear chart exists.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub method_used: Method,
    pub warnings: Vec<String>,
    pub trace: Vec<TraceRow>,
}

/// `sum_i w_i d^2(x_i, b)`.
pub fn frechet_value(s: &SpaceDescriptor, p: &FiniteMeasure, b: &Point) -> f64 {
    p.support()
        .iter()
        .zip(p.weights())
        .map(|(x, w)| w * s.dist_sq(x, b))
        .sum()
}

/// `∫∫ <x, y>_b dP⊗P` over the log-pushforward.
pub fn exp_bary_residual(s: &SpaceDescriptor, p: &FiniteMeasure, b: &Point) -> Result<f64> {
    Ok(log_pushforward(s, p, b)?.gram())
}

/// `sum_j w_j <log_b x, log_b y_j>_b` for an atom `x` of `P`.
pub fn per_point_first_order(s: &SpaceDescriptor, p: &FiniteMeasure, b: &Point, x: &Point) -> Result<f64> {
    if p.atom_index(s, x).is_none() {
        return Err(GeometryError::input(format!("{x} is not in the support")));
    }
    let t = log_pushforward(s, p, b)?;
    let lx = s.log_unchecked(b, x, TieBreak::Lexicographic)?;
    t.first_order(&lx)
}

fn residual_at(s: &SpaceDescriptor, p: &FiniteMeasure, b: &Point) -> f64 {
    exp_bary_residual(s, p, b).map_or(f64::NAN, |r| r.max(0.0).sqrt())
}

fn trace_row(s: &SpaceDescriptor, p: &FiniteMeasure, iter: usize, b: &Point, residual: f64) -> TraceRow {
    TraceRow {
        iter,
        residual,
        frechet_value: frechet_value(s, p, b),
        coords: b.coords().to_vec(),
    }
}

/// Atom with the smallest Fréchet value, earliest index on ties.
fn best_atom(s: &SpaceDescriptor, p: &FiniteMeasure) -> Point {
    let mut best = (f64::INFINITY, 0);
    for (i, x) in p.support().iter().enumerate() {
        let f = frechet_value(s, p, x);
        if f < best.0 {
            best = (f, i);
        }
    }
    p.support()[best.1].clone()
}

/// Approximate radius of the smallest enclosing ball of the support.
fn circumradius(s: &SpaceDescriptor, p: &FiniteMeasure) -> f64 {
    let mut c = p.support()[0].clone();
    for k in 1..=500 {
        let far = p
            .support()
            .iter()
            .max_by(|a, b| s.dist(&c, a).total_cmp(&s.dist(&c, b)))
            .unwrap();
        match s.geodesic_point(&c, far, 1.0 / (k as f64 + 1.0)) {
            Ok(q) => c = q,
            Err(_) => break,
        }
    }
    p.support().iter().map(|x| s.dist(&c, x)).fold(0.0, f64::max)
}

fn uniqueness_warnings(s: &SpaceDescriptor, p: &FiniteMeasure) -> Vec<String> {
    let mut out = Vec::new();
    if let SpaceDescriptor::Sphere { radius, .. } = s {
        let limit = 0.5 * PI * radius - 1e-6;
        let r = circumradius(s, p);
        if r >= limit {
            out.push(format!(
                "support circumradius {r} is not below pi r / 2; the barycenter may be non-unique"
            ));
        }
    }
    out
}

/// Fixed-point iteration `b <- exp_b(sum_i w_i log_b x_i)`, started at the
/// best atom. Hands over to [`grid_refine_solve`] at a point without a
/// linear chart or when a step leaves the injectivity range.
pub fn karcher_solve(s: &SpaceDescriptor, p: &FiniteMeasure, opts: &SolveOptions) -> Result<Solution, SolveError> {
    opts.validate()?;
    p.check(s)?;
    let warnings = uniqueness_warnings(s, p);
    let mut b = best_atom(s, p);
    let mut trace = Vec::new();
    let mut residual = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let handover = |reason: String, trace: Vec<TraceRow>| -> Result<Solution, SolveError> {
            let mut sol = grid_refine_solve(s, p, opts)?;
            let mut w = warnings.clone();
            w.push(reason);
            w.append(&mut sol.warnings);
            sol.warnings = w;
            let offset = trace.len();
            let mut full = trace;
            full.extend(sol.trace.into_iter().map(|mut r| {
                r.iter += offset;
                r
            }));
            sol.trace = full;
            sol.iterations += offset;
            Ok(sol)
        };
        let logs = s_logs(s, p, &b)?;
        let Some(v) = Tangent::weighted_sum(p.weights().iter().copied().zip(logs.iter())) else {
            trace.push(trace_row(s, p, iter, &b, residual_at(s, p, &b)));
            return handover(format!("no linear chart at {b}; switched to grid refinement"), trace);
        };
        residual = v.norm();
        trace.push(trace_row(s, p, iter, &b, residual));
        if residual < opts.step_tol {
            return Ok(Solution {
                point: b,
                residual,
                iterations: iter,
                converged: true,
                method_used: Method::Karcher,
                warnings,
                trace,
            });
        }
        b = match s.exp_unchecked(&b, &v) {
            Ok(q) => q,
            Err(GeometryError::Range(msg)) => {
                return handover(format!("karcher step out of range ({msg}); switched to grid refinement"), trace)
            }
            Err(e) => return Err(e.into()),
        };
    }
    let last = Solution {
        point: b,
        residual,
        iterations: opts.max_iter,
        converged: false,
        method_used: Method::Karcher,
        warnings,
        trace,
    };
    Err(SolveError::NonConvergence {
        iterations: opts.max_iter,
        residual,
        last: Box::new(last),
    })
}

fn s_logs(s: &SpaceDescriptor, p: &FiniteMeasure, b: &Point) -> Result<Vec<Tangent>> {
    p.support()
        .iter()
        .map(|x| s.log_unchecked(b, x, TieBreak::Lexicographic))
        .collect()
}

/// Candidate with strictly smaller value wins; equal values fall back to
/// lexicographic order of coordinates.
fn better(s_val: f64, s_pt: &Point, best_val: f64, best_pt: &Point) -> bool {
    s_val < best_val || (s_val == best_val && s_pt.lex_cmp(best_pt).is_lt())
}

struct Search<'a> {
    s: &'a SpaceDescriptor,
    p: &'a FiniteMeasure,
    best: Point,
    best_val: f64,
}

impl Search<'_> {
    fn offer(&mut self, q: Point) -> bool {
        let f = frechet_value(self.s, self.p, &q);
        if better(f, &q, self.best_val, &self.best) {
            self.best = q;
            self.best_val = f;
            true
        } else {
            false
        }
    }
}

/// Unit probe directions for the pattern search at `c`.
fn probe_directions(s: &SpaceDescriptor, c: &Point) -> Vec<Tangent> {
    match s {
        SpaceDescriptor::FlatCone { total_angle } if c.coords()[0] == 0.0 => (0..32)
            .map(|k| Tangent::apex(1.0, k as f64 * total_angle / 32.0, *total_angle))
            .collect(),
        _ => {
            let basis = s.tangent_basis(c).unwrap_or_default();
            basis
                .iter()
                .flat_map(|e| [e.clone(), e.neg().unwrap_or_else(|| e.clone())])
                .collect()
        }
    }
}

fn scale_dir(t: &Tangent, h: f64) -> Tangent {
    match t {
        Tangent::Apex {
            phi, total_angle, ..
        } => Tangent::apex(h, *phi, *total_angle),
        _ => t.scaled(h),
    }
}

/// Coarse grid scan of the Fréchet functional followed by a compass pattern
/// search with step halving down to `step_tol`.
///
/// Cones are scanned on a polar grid around the apex, which is always a
/// candidate when `include_apex_candidate` is set. Products are solved one
/// factor at a time since the functional separates.
pub fn grid_refine_solve(s: &SpaceDescriptor, p: &FiniteMeasure, opts: &SolveOptions) -> Result<Solution> {
    opts.validate()?;
    p.check(s)?;
    if let SpaceDescriptor::Product { .. } = s {
        let (ls, lp) = p.marginal(s, true)?;
        let (rs, rp) = p.marginal(s, false)?;
        let a = grid_refine_solve(&ls, &lp, opts)?;
        let b = grid_refine_solve(&rs, &rp, opts)?;
        let point = Point::join(a.point, b.point);
        let mut warnings = uniqueness_warnings(s, p);
        warnings.extend(a.warnings);
        warnings.extend(b.warnings);
        let residual = residual_at(s, p, &point);
        let trace = vec![trace_row(s, p, 1, &point, residual)];
        return Ok(Solution {
            point,
            residual,
            iterations: a.iterations + b.iterations,
            converged: true,
            method_used: Method::GridRefine,
            warnings,
            trace,
        });
    }

    let mut trace = Vec::new();
    let mut iter = 0;
    let mut record = |trace: &mut Vec<TraceRow>, q: &Point| {
        iter += 1;
        trace.push(trace_row(s, p, iter, q, residual_at(s, p, q)));
    };

    let start = best_atom(s, p);
    let mut search = Search {
        s,
        p,
        best_val: frechet_value(s, p, &start),
        best: start.clone(),
    };
    for x in p.support() {
        search.offer(x.clone());
    }
    record(&mut trace, &search.best);
    if opts.include_apex_candidate {
        if let Some(apex) = s.apex() {
            search.offer(apex.clone());
            record(&mut trace, &apex);
        }
    }

    let res = opts.grid_resolution;
    let mut h;
    match s {
        SpaceDescriptor::FlatCone { total_angle } => {
            let rmax = p.support().iter().map(|x| x.coords()[0]).fold(0.0, f64::max);
            for i in 1..=res {
                let rho = rmax * i as f64 / res as f64;
                for j in 0..res {
                    let phi = total_angle * j as f64 / res as f64;
                    search.offer(s.canonicalize(Point::new(vec![rho, phi])));
                }
            }
            h = (rmax / res as f64).max(rmax * total_angle / res as f64);
        }
        _ => {
            let center = start.clone();
            let basis = s.tangent_basis(&center)?;
            let radius = p.support().iter().map(|x| s.dist(&center, x)).fold(0.0, f64::max);
            let d = basis.len().max(1);
            let per_axis = if d <= 2 {
                res
            } else {
                ((1usize << 18) as f64).powf(1.0 / d as f64).floor().max(3.0) as usize
            };
            let spacing = 2.0 * radius / (per_axis.max(2) - 1) as f64;
            let mut idx = vec![0usize; d];
            'grid: loop {
                let mut v = s.zero_tangent(&center);
                for (k, e) in basis.iter().enumerate() {
                    let c = -radius + spacing * idx[k] as f64;
                    v = v.add(&e.scaled(c)).expect("linear chart");
                }
                if let Ok(q) = s.exp_unchecked(&center, &v) {
                    search.offer(q);
                }
                for k in 0..d {
                    idx[k] += 1;
                    if idx[k] < per_axis {
                        continue 'grid;
                    }
                    idx[k] = 0;
                }
                break;
            }
            h = spacing.max(f64::MIN_POSITIVE);
        }
    }
    record(&mut trace, &search.best);

    if h == 0.0 {
        h = opts.step_tol;
    }
    while h >= opts.step_tol {
        let c = search.best.clone();
        let mut moved = false;
        for dir in probe_directions(s, &c) {
            if let Ok(q) = s.exp_unchecked(&c, &scale_dir(&dir, h)) {
                if search.offer(q) {
                    moved = true;
                    break;
                }
            }
        }
        if moved {
            record(&mut trace, &search.best);
        } else {
            h *= 0.5;
        }
        if trace.len() > 100_000 {
            break;
        }
    }

    let point = search.best;
    let residual = residual_at(s, p, &point);
    Ok(Solution {
        point,
        residual,
        iterations: iter,
        converged: true,
        method_used: Method::GridRefine,
        warnings: uniqueness_warnings(s, p),
        trace,
    })
}

/// Runs the configured solver.
pub fn solve(s: &SpaceDescriptor, p: &FiniteMeasure, opts: &SolveOptions) -> Result<Solution, SolveError> {
    match opts.method {
        Method::Karcher => karcher_solve(s, p, opts),
        Method::GridRefine => Ok(grid_refine_solve(s, p, opts)?),
    }
}
