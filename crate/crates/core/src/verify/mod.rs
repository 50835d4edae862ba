//! Executable checks around barycenters: Gram nonnegativity, first-order
//! conditions, bilinearity on `Lin`, constructive approximation sequences
//! and U-statistic rates. Every check produces a [`VerificationReport`].

mod approx;
mod rate;
pub mod sweeps;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::barycenter::per_point_first_order;
use crate::error::{GeometryError, Result};
use crate::measures::{log_pushforward, FiniteMeasure};
use crate::spaces::{Point, SpaceDescriptor};
use crate::tangent::{Tangent, TangentVector};

pub use approx::{
    approx_schedule, approx_sequence, doubling_schedule, opposite_search, subadditive_combine, ApproxConfig, ApproxOutcome,
    OppositeConfig, OppositeOutcome, APPROX_REPLICATES,
};
pub use rate::{ustat_rate, RateOptions, RateResult};

/// Outcome of one check. `passed` holds exactly when `margin >= -tolerance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub passed: bool,
    pub margin: f64,
    pub tolerance: f64,
    pub seed: u64,
    pub details: BTreeMap<String, Value>,
}

impl VerificationReport {
    pub fn new(check_name: impl Into<String>, margin: f64, tolerance: f64, seed: u64) -> Self {
        VerificationReport {
            check_name: check_name.into(),
            passed: margin >= -tolerance,
            margin,
            tolerance,
            seed,
            details: BTreeMap::new(),
        }
    }

    /// Report for several claims `defect_k <= tol_k` sharing one tolerance:
    /// the margin is shifted so that the report passes iff every claim holds.
    pub fn composite(check_name: impl Into<String>, claims: &[(f64, f64)], tolerance: f64, seed: u64) -> Self {
        let margin = claims
            .iter()
            .map(|(defect, tol)| tol - defect - tolerance)
            .fold(f64::INFINITY, f64::min);
        let margin = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
        Self::new(check_name, margin, tolerance, seed)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.details.insert(key.to_string(), value.into());
        self
    }

    /// Combines reports of the same check: worst margin, all details kept
    /// under numbered prefixes.
    pub fn worst_of(check_name: &str, tolerance: f64, seed: u64, reports: Vec<VerificationReport>) -> Self {
        let margin = reports.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        let mut out = Self::new(check_name, margin, tolerance, seed);
        out.passed = reports.iter().all(|r| r.passed) && out.passed;
        for (i, r) in reports.into_iter().enumerate() {
            for (k, v) in r.details {
                out.details.insert(format!("{i}.{k}"), v);
            }
            out.details.insert(format!("{i}.margin"), Value::from(r.margin));
        }
        out
    }
}

/// `sum_{ij} w_i w_j <log_p x_i, log_p x_j>_p`.
pub fn lang_schroeder_gram(s: &SpaceDescriptor, p: &Point, q: &FiniteMeasure) -> Result<f64> {
    Ok(log_pushforward(s, q, p)?.gram())
}

pub fn lang_schroeder_report(
    s: &SpaceDescriptor,
    p: &Point,
    q: &FiniteMeasure,
    tolerance: f64,
    seed: u64,
) -> Result<VerificationReport> {
    let g = lang_schroeder_gram(s, p, q)?;
    Ok(VerificationReport::new("lang-schroeder", g, tolerance, seed).with("gram", g))
}

/// Result of [`mixture_first_order`].
#[derive(Clone, Debug)]
pub struct MixtureResult {
    /// Extrapolated `Q<x, .>_b`.
    pub value: f64,
    /// `(eps, a(eps))` with `a(eps) = ((1+eps)^2 Gram(Q_eps) - Gram(Q)) / (2 eps)`.
    pub coefficients: Vec<(f64, f64)>,
}

/// `Q<x, .>_b` recovered from Gram sums of the mixtures
/// `Q_eps = Q/(1+eps) + eps/(1+eps) delta_x`.
///
/// `(1+eps)^2 Gram(Q_eps) = Gram(Q) + 2 eps Q<x, .> + eps^2 |x|^2`, so the
/// difference quotient is linear in `eps` and two points extrapolate it to
/// `eps = 0` exactly.
pub fn mixture_first_order(
    s: &SpaceDescriptor,
    q: &FiniteMeasure,
    b: &Point,
    x: &Point,
    eps_schedule: &[f64],
) -> Result<MixtureResult> {
    if eps_schedule.is_empty() || eps_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(GeometryError::input("eps_schedule must be non-empty and positive"));
    }
    if eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(GeometryError::input("eps_schedule must be decreasing"));
    }
    s.check_point(x)?;
    let g = lang_schroeder_gram(s, b, q)?;
    let mut coefficients = Vec::with_capacity(eps_schedule.len());
    for &eps in eps_schedule {
        let mut support = q.support().to_vec();
        let mut weights: Vec<f64> = q.weights().iter().map(|w| w / (1.0 + eps)).collect();
        support.push(x.clone());
        weights.push(eps / (1.0 + eps));
        let mixed = FiniteMeasure::from_weights(s, support, weights)?;
        let ge = lang_schroeder_gram(s, b, &mixed)?;
        coefficients.push((eps, ((1.0 + eps).powi(2) * ge - g) / (2.0 * eps)));
    }
    let value = match coefficients.as_slice() {
        [(_, a)] => *a,
        [.., (e1, a1), (e2, a2)] => (e1 * a2 - e2 * a1) / (e1 - e2),
        [] => unreachable!(),
    };
    Ok(MixtureResult { value, coefficients })
}

/// Default schedule for [`mixture_first_order`].
pub const DEFAULT_EPS_SCHEDULE: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

/// Compares the mixture route with the direct first-order sum for every atom,
/// and checks `Q<x, .> >= 0`, plus `Q<x, .> = 0` when `b` is an exponential
/// barycenter (residual at most `bary_tol`).
pub fn mixture_report(
    s: &SpaceDescriptor,
    q: &FiniteMeasure,
    b: &Point,
    eps_schedule: &[f64],
    tolerance: f64,
    bary_tol: f64,
    seed: u64,
) -> Result<VerificationReport> {
    let residual = log_pushforward(s, q, b)?.gram();
    let at_barycenter = residual <= bary_tol;
    let mut claims = Vec::new();
    let mut worst_gap: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    for x in q.support() {
        let m = mixture_first_order(s, q, b, x, eps_schedule)?.value;
        let direct = per_point_first_order(s, q, b, x)?;
        worst_gap = worst_gap.max((m - direct).abs());
        min_value = min_value.min(m);
        claims.push(((m - direct).abs(), tolerance));
        claims.push((-m, tolerance));
        if at_barycenter {
            claims.push((m.abs(), tolerance));
        }
    }
    Ok(VerificationReport::composite("mixture", &claims, tolerance, seed)
        .with("residual", residual)
        .with("at_barycenter", at_barycenter)
        .with("max_route_gap", worst_gap)
        .with("min_first_order", min_value))
}

/// `max_x |Q<x, .>_b|` over the support, claimed to vanish at an
/// exponential barycenter.
pub fn first_order_report(
    s: &SpaceDescriptor,
    q: &FiniteMeasure,
    b: &Point,
    tolerance: f64,
    seed: u64,
) -> Result<VerificationReport> {
    let residual = log_pushforward(s, q, b)?.gram();
    let mut worst: f64 = 0.0;
    for x in q.support() {
        worst = worst.max(per_point_first_order(s, q, b, x)?.abs());
    }
    Ok(VerificationReport::new("first-order", -worst, tolerance, seed)
        .with("residual", residual)
        .with("max_abs_first_order", worst))
}

/// Every atom's log must admit an opposite. The margin is minus the worst
/// witness defect, or minus `|log_b x|^2` for an atom without an opposite.
pub fn support_in_lin_check(
    s: &SpaceDescriptor,
    p: &FiniteMeasure,
    b: &Point,
    tolerance: f64,
    seed: u64,
) -> Result<VerificationReport> {
    let t = log_pushforward(s, p, b)?;
    let mut worst: f64 = 0.0;
    let mut outside = 0usize;
    for v in &t.vectors {
        match v.lin_membership(tolerance) {
            (true, Some(w)) => worst = worst.max(v.witness_defect(&w)?),
            _ => {
                outside += 1;
                worst = worst.max(v.tangent.norm_sq());
            }
        }
    }
    Ok(VerificationReport::new("support-lin", -worst, tolerance, seed)
        .with("atoms", t.vectors.len())
        .with("atoms_outside_lin", outside)
        .with("singular_base", s.is_singular(b))
        .with("residual", t.gram()))
}

/// Midpoint linearity of `x -> <x, b_vec>` on `Lin`: for all pairs of
/// samples and all `t`, `<x_t, b> = (1-t)<x0, b> + t<x1, b>` with
/// `x_t = (1-t) x0 + t x1`. With `weights`, also checks `sum_i w_i <x_i, b> = 0`
/// up to `integral_tol`.
pub fn linearity_check(
    b_vec: &TangentVector,
    lin_samples: &[TangentVector],
    t_grid: &[f64],
    weights: Option<&[f64]>,
    tolerance: f64,
    integral_tol: f64,
    seed: u64,
) -> Result<VerificationReport> {
    if !b_vec.tangent.is_linear() || lin_samples.iter().any(|v| !v.tangent.is_linear()) {
        return Err(GeometryError::input(
            "linearity check needs a base point with a linear chart; use a smooth instance",
        ));
    }
    let mut worst: f64 = 0.0;
    for (i, x0) in lin_samples.iter().enumerate() {
        for x1 in &lin_samples[i + 1..] {
            let (a0, a1) = (x0.inner(b_vec)?, x1.inner(b_vec)?);
            for &t in t_grid {
                let xt = Tangent::weighted_sum([(1.0 - t, &x0.tangent), (t, &x1.tangent)])
                    .ok_or_else(|| GeometryError::NoLinearChart("sample addition".into()))?;
                let at = xt.inner(&b_vec.tangent)?;
                worst = worst.max((at - (1.0 - t) * a0 - t * a1).abs());
            }
        }
    }
    let mut claims = vec![(worst, tolerance)];
    let mut report_integral = None;
    if let Some(w) = weights {
        if w.len() != lin_samples.len() {
            return Err(GeometryError::input("weights and samples differ in length"));
        }
        let mut integral = 0.0;
        for (wi, x) in w.iter().zip(lin_samples) {
            integral += wi * x.inner(b_vec)?;
        }
        claims.push((integral.abs(), integral_tol));
        report_integral = Some(integral);
    }
    let mut r = VerificationReport::composite("linearity", &claims, tolerance, seed).with("max_defect", worst);
    if let Some(i) = report_integral {
        r = r.with("weighted_integral", i);
    }
    Ok(r)
}

/// `| |u+v|^2 + |u-v|^2 - 2|u|^2 - 2|v|^2 |`, with `|u+v|` from vector
/// addition and `|u-v|` from the cone metric.
pub fn parallelogram_defect(u: &TangentVector, v: &TangentVector) -> Result<f64> {
    let plus = u.add(v)?.tangent.norm_sq();
    let minus = u.distance(v)?.powi(2);
    Ok((plus + minus - 2.0 * u.tangent.norm_sq() - 2.0 * v.tangent.norm_sq()).abs())
}
