//! Subadditive combination in tangent cones, the empirical approximation
//! sequence and the search for an opposite direction.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::VerificationReport;
use crate::error::{GeometryError, Result, SearchFailure, VerifyError};
use crate::measures::{log_pushforward, FiniteMeasure};
use crate::rng::{derive_seed, stream};
use crate::spaces::{Point, SpaceDescriptor};
use crate::tangent::{Tangent, TangentVector};

/// Grid resolutions tried at a cone apex, coarse to fine.
const APEX_RESOLUTIONS: [usize; 6] = [64, 128, 256, 512, 1024, 2048];

fn rounding_allowance(xs: &[Tangent], us: &[Tangent]) -> f64 {
    let mx = xs.iter().map(|x| x.norm()).sum::<f64>();
    let mu = us.iter().map(|u| u.norm()).fold(0.0, f64::max);
    1e-12 * (1.0 + mx * mx + mx * mu)
}

fn split_pair(v: &Tangent) -> (Tangent, Tangent) {
    match v {
        Tangent::Pair(a, b) => ((**a).clone(), (**b).clone()),
        _ => unreachable!("product chart expected"),
    }
}

fn sum_of(zero: &Tangent, xs: &[Tangent]) -> Option<Tangent> {
    xs.iter().try_fold(zero.clone(), |acc, x| acc.add(x))
}

fn gram_of(xs: &[Tangent]) -> Result<f64> {
    let mut g = 0.0;
    for a in xs {
        for b in xs {
            g += a.inner(b)?;
        }
    }
    Ok(g)
}

/// Largest-magnitude feasible point of a `(magnitude, phi)` grid at a cone
/// apex, refined until one is found. `Err` carries the least infeasible
/// candidate of the finest grid.
fn apex_grid(total_angle: f64, xs: &[Tangent], us: &[Tangent], eps: f64) -> Result<std::result::Result<Tangent, Tangent>> {
    let g = gram_of(xs)?;
    let rhs: Vec<f64> = us
        .iter()
        .map(|u| xs.iter().map(|x| x.inner(u)).sum::<Result<f64>>())
        .collect::<Result<_>>()?;
    let mmax = (g + eps).max(0.0).sqrt();
    let mut best_infeasible = (f64::INFINITY, Tangent::apex(0.0, 0.0, total_angle));
    for res in APEX_RESOLUTIONS {
        best_infeasible.0 = f64::INFINITY;
        for i in (0..=res).rev() {
            let m = mmax * i as f64 / res as f64;
            let phis = if i == 0 { 1 } else { res };
            for j in 0..phis {
                let y = Tangent::apex(m, total_angle * j as f64 / res as f64, total_angle);
                let mut worst = m * m - g - eps;
                for (u, r) in us.iter().zip(&rhs) {
                    worst = worst.max(y.inner(u)? - r - eps);
                }
                if worst <= 0.0 {
                    return Ok(Ok(y));
                }
                if worst < best_infeasible.0 {
                    best_infeasible = (worst, y);
                }
            }
        }
    }
    Ok(Err(best_infeasible.1))
}

fn combine(zero: &Tangent, xs: &[Tangent], us: &[Tangent], eps: f64) -> Result<std::result::Result<Tangent, Tangent>> {
    if zero.is_linear() {
        return Ok(Ok(sum_of(zero, xs).expect("linear chart")));
    }
    match zero {
        Tangent::Pair(zl, zr) => {
            let (xl, xr): (Vec<_>, Vec<_>) = xs.iter().map(split_pair).unzip();
            let (ul, ur): (Vec<_>, Vec<_>) = us.iter().map(split_pair).unzip();
            let l = combine(zl, &xl, &ul, 0.5 * eps)?;
            let r = combine(zr, &xr, &ur, 0.5 * eps)?;
            let ok = l.is_ok() && r.is_ok();
            let y = Tangent::Pair(Box::new(l.unwrap_or_else(|e| e)), Box::new(r.unwrap_or_else(|e| e)));
            Ok(if ok { Ok(y) } else { Err(y) })
        }
        Tangent::Apex { total_angle, .. } => apex_grid(*total_angle, xs, us, eps),
        _ => unreachable!("flat charts are linear"),
    }
}

/// A vector `y` at `p` with `<y, u> <= sum_i <x_i, u> + eps` for every
/// `u` in `us` and `|y|^2 <= sum_{ij} <x_i, x_j> + eps`.
///
/// In a linear chart `y` is the plain sum. At a cone apex `y` is the
/// largest feasible point of a `(magnitude, phi)` grid, refined from 64 to
/// 2048 points per axis. Products are handled per factor with `eps / 2`
/// each. An infeasible search is reported as [`SearchFailure`].
pub fn subadditive_combine(
    s: &SpaceDescriptor,
    p: &Point,
    xs: &[TangentVector],
    us: &[TangentVector],
    eps: f64,
) -> std::result::Result<TangentVector, VerifyError> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(GeometryError::input("eps must be non-negative").into());
    }
    s.check_point(p)?;
    let zero = TangentVector::new(p.clone(), s.zero_tangent(p));
    for v in xs.iter().chain(us) {
        zero.inner(v)?;
    }
    let xt: Vec<Tangent> = xs.iter().map(|v| v.tangent.clone()).collect();
    let ut: Vec<Tangent> = us.iter().map(|v| v.tangent.clone()).collect();
    let found = combine(&zero.tangent, &xt, &ut, eps)?;
    let y = match &found {
        Ok(y) | Err(y) => y.clone(),
    };
    let mut inner_violation = f64::NEG_INFINITY;
    for u in &ut {
        let r: f64 = xt.iter().map(|x| x.inner(u)).sum::<Result<f64>>()?;
        inner_violation = inner_violation.max(y.inner(u)? - r);
    }
    let norm_violation = y.norm_sq() - gram_of(&xt)?;
    let slack = eps + rounding_allowance(&xt, &ut);
    if found.is_err() || inner_violation > slack || norm_violation > slack {
        return Err(SearchFailure {
            best: TangentVector::new(p.clone(), y),
            inner_violation,
            norm_violation,
        }
        .into());
    }
    Ok(TangentVector::new(p.clone(), y))
}

fn default_replicates() -> usize {
    16
}
fn default_inner_slack() -> f64 {
    0.05
}
fn default_norm_rel_tol() -> f64 {
    0.05
}
fn default_norm_abs_slack() -> f64 {
    1e-3
}

/// Parameters of [`approx_sequence`]. The ball `B` is the set of points whose
/// log lies within `ball_radius` of `log_b(ball_center)` in the tangent cone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    pub ball_center: Point,
    pub ball_radius: f64,
    pub test_set: Vec<TangentVector>,
    /// Slack handed to [`subadditive_combine`] at each step of `n_schedule`;
    /// the last value is reused when the schedule is shorter.
    pub epsilon_schedule: Vec<f64>,
    pub n_schedule: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    /// Allowed excess of the tail maximum of `<u, y^n>` over its bound.
    #[serde(default = "default_inner_slack")]
    pub inner_slack: f64,
    /// Relative tolerance on the tail mean of `|y^n|^2`.
    #[serde(default = "default_norm_rel_tol")]
    pub norm_rel_tol: f64,
    #[serde(default = "default_norm_abs_slack")]
    pub norm_abs_slack: f64,
}

impl ApproxConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ball_radius.is_finite() && self.ball_radius > 0.0) {
            return Err(GeometryError::input("ball_radius must be positive"));
        }
        if self.test_set.is_empty() {
            return Err(GeometryError::input("test_set must be non-empty"));
        }
        if self.epsilon_schedule.is_empty() || self.n_schedule.is_empty() {
            return Err(GeometryError::input("schedules must be non-empty"));
        }
        if self.epsilon_schedule.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || self.epsilon_schedule.windows(2).any(|w| w[1] > w[0])
        {
            return Err(GeometryError::input("epsilon_schedule must be positive and decreasing"));
        }
        if self.n_schedule[0] == 0 || self.n_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GeometryError::input("n_schedule must be positive and increasing"));
        }
        if self.replicates == 0 {
            return Err(GeometryError::input("replicates must be positive"));
        }
        if [self.inner_slack, self.norm_rel_tol, self.norm_abs_slack]
            .iter()
            .any(|x| !(x.is_finite() && *x >= 0.0))
        {
            return Err(GeometryError::input("slacks must be non-negative"));
        }
        Ok(())
    }

    fn eps_at(&self, k: usize) -> f64 {
        self.epsilon_schedule[k.min(self.epsilon_schedule.len() - 1)]
    }
}

/// Doubling schedule `10, 20, ..., 1280`.
pub fn doubling_schedule() -> Vec<usize> {
    (0..8).map(|k| 10 << k).collect()
}

/// Doubling schedule `10, ..., 10 * 2^19` for [`approx_sequence`]. The
/// deviation of `y^n` from its limit is of order `1/(P(B) sqrt(n))`, so the
/// tail must start well past the rate schedule for the slacks to resolve it.
pub fn approx_schedule() -> Vec<usize> {
    (0..20).map(|k| 10 << k).collect()
}

/// Replicates used with [`approx_schedule`].
pub const APPROX_REPLICATES: usize = 64;

#[derive(Clone, Debug)]
pub struct ApproxOutcome {
    /// `y^n` along `n_schedule` for the selected replicate.
    pub sequence: Vec<TangentVector>,
    /// `y^n` for every replicate.
    pub replicate_sequences: Vec<Vec<TangentVector>>,
    pub selected_replicate: usize,
    /// Tail maximum of the empirical deviations of the selected replicate.
    pub score: f64,
    pub p_ball: f64,
    /// `(1/P(B)) ∫_{B^c} <u, x> dP` per test vector.
    pub inner_bound: Vec<f64>,
    /// Tail maximum of `<u, y^n>` per test vector.
    pub inner_tail_max: Vec<f64>,
    /// `(1/P(B)^2) ∫_B ∫_B <x, y> dP⊗P`.
    pub norm_target: f64,
    /// Tail mean of `|y^n|^2`.
    pub norm_tail_mean: f64,
    /// The construction applied to `P` itself: the limit of `y^n`.
    pub population: TangentVector,
    pub report: VerificationReport,
}

fn tail_start(len: usize) -> usize {
    len / 2
}

/// The sequence `y^n` obtained by combining the `B`-complement atoms of the
/// empirical measures `P_n`, scaled by `1/P(B)`.
///
/// Each replicate draws one i.i.d. sequence, so the `P_n` are nested. The
/// replicate whose empirical Gram sums over `B×B`, `B^c×B^c` and first
/// moments against the test set, scaled by `1/P(B)^2` and `1/P(B)` as in the
/// claims, stay closest to their population values over the tail of the
/// schedule is selected. The report checks that the tail maximum of
/// `<u, y^n>` stays below its bound up to `inner_slack`, and that the tail
/// mean of `|y^n|^2` matches the `B×B` Gram bound within the relative
/// tolerance.
pub fn approx_sequence(
    s: &SpaceDescriptor,
    p: &FiniteMeasure,
    b: &Point,
    cfg: &ApproxConfig,
) -> std::result::Result<ApproxOutcome, VerifyError> {
    cfg.validate()?;
    let pushed = log_pushforward(s, p, b)?;
    let center = s.log_map(b, &cfg.ball_center)?;
    let m = p.len();
    let v: Vec<&Tangent> = pushed.vectors.iter().map(|t| &t.tangent).collect();
    let w = &pushed.weights;
    let in_ball: Vec<bool> = v
        .iter()
        .map(|t| t.dist_sq(&center.tangent).map(|d| d < cfg.ball_radius * cfg.ball_radius))
        .collect::<Result<_>>()?;
    let p_ball: f64 = (0..m).filter(|&i| in_ball[i]).map(|i| w[i]).sum();
    if p_ball <= 0.0 {
        return Err(GeometryError::input("the ball has zero mass").into());
    }
    let us = &cfg.test_set;
    let mut gram = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            gram[i * m + j] = v[i].inner(v[j])?;
        }
    }
    let mut moments = vec![0.0; m * us.len()];
    for i in 0..m {
        for (k, u) in us.iter().enumerate() {
            moments[i * us.len() + k] = v[i].inner(&u.tangent)?;
        }
    }

    // Population and empirical summaries: Gram sums over B×B and B^c×B^c,
    // first moments over B and B^c.
    let summary = |q: &[f64]| -> (f64, f64, Vec<f64>, Vec<f64>) {
        let (mut bb, mut cc) = (0.0, 0.0);
        for i in 0..m {
            for j in 0..m {
                let t = q[i] * q[j] * gram[i * m + j];
                if in_ball[i] && in_ball[j] {
                    bb += t;
                } else if !in_ball[i] && !in_ball[j] {
                    cc += t;
                }
            }
        }
        let (mut ub, mut uc) = (vec![0.0; us.len()], vec![0.0; us.len()]);
        for i in 0..m {
            for k in 0..us.len() {
                let t = q[i] * moments[i * us.len() + k];
                if in_ball[i] {
                    ub[k] += t;
                } else {
                    uc[k] += t;
                }
            }
        }
        (bb, cc, ub, uc)
    };
    let (pop_bb, pop_cc, pop_ub, pop_uc) = summary(w);
    let inner_bound: Vec<f64> = pop_uc.iter().map(|x| x / p_ball).collect();
    let norm_target = pop_bb / (p_ball * p_ball);

    let combine_at = |q: &[f64], eps: f64| -> std::result::Result<TangentVector, VerifyError> {
        let xs: Vec<TangentVector> = (0..m)
            .filter(|&i| !in_ball[i] && q[i] > 0.0)
            .map(|i| pushed.vectors[i].scaled(q[i] / p_ball))
            .collect();
        subadditive_combine(s, b, &xs, us, eps)
    };
    let population = combine_at(w, cfg.eps_at(cfg.n_schedule.len() - 1))?;

    let tail = tail_start(cfg.n_schedule.len());
    let mut replicate_sequences = Vec::with_capacity(cfg.replicates);
    let mut scores = Vec::with_capacity(cfg.replicates);
    for r in 0..cfg.replicates {
        let mut rng = stream(cfg.seed, r as u64);
        let mut counts = vec![0usize; m];
        let mut drawn = 0usize;
        let mut seq = Vec::with_capacity(cfg.n_schedule.len());
        let mut score: f64 = 0.0;
        for (k, &n) in cfg.n_schedule.iter().enumerate() {
            let extra = p.draw_counts(n - drawn, &mut rng);
            counts.iter_mut().zip(&extra).for_each(|(c, e)| *c += e);
            drawn = n;
            let q: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            seq.push(combine_at(&q, cfg.eps_at(k))?);
            if k >= tail {
                let (bb, cc, ub, uc) = summary(&q);
                let mut dev = ((bb - pop_bb).abs() + (cc - pop_cc).abs()) / (p_ball * p_ball);
                for i in 0..us.len() {
                    dev += ((ub[i] - pop_ub[i]).abs() + (uc[i] - pop_uc[i]).abs()) / p_ball;
                }
                score = score.max(dev);
            }
        }
        replicate_sequences.push(seq);
        scores.push(score);
    }
    let selected = (0..cfg.replicates)
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)))
        .unwrap();
    let sequence = replicate_sequences[selected].clone();

    let mut inner_tail_max = vec![f64::NEG_INFINITY; us.len()];
    let mut norm_sum = 0.0;
    for y in &sequence[tail..] {
        for (k, u) in us.iter().enumerate() {
            inner_tail_max[k] = inner_tail_max[k].max(y.inner(u)?);
        }
        norm_sum += y.tangent.norm_sq();
    }
    let norm_tail_mean = norm_sum / (sequence.len() - tail) as f64;

    let mut claims: Vec<(f64, f64)> = inner_tail_max
        .iter()
        .zip(&inner_bound)
        .map(|(mx, lhs)| (mx - lhs, cfg.inner_slack))
        .collect();
    claims.push((
        (norm_tail_mean - norm_target).abs(),
        cfg.norm_rel_tol * norm_target.abs() + cfg.norm_abs_slack,
    ));
    let report = VerificationReport::composite("approx", &claims, 1e-12, cfg.seed)
        .with("p_ball", p_ball)
        .with("inner_bound", inner_bound.clone())
        .with("inner_tail_max", inner_tail_max.clone())
        .with("norm_target", norm_target)
        .with("norm_tail_mean", norm_tail_mean)
        .with("selected_replicate", selected)
        .with("score", scores[selected]);

    Ok(ApproxOutcome {
        sequence,
        replicate_sequences,
        selected_replicate: selected,
        score: scores[selected],
        p_ball,
        inner_bound,
        inner_tail_max,
        norm_target,
        norm_tail_mean,
        population,
        report,
    })
}

fn default_deltas() -> Vec<f64> {
    vec![0.2, 0.1, 0.05]
}
fn default_eps() -> Vec<f64> {
    vec![1e-3]
}
fn default_tol_angle() -> f64 {
    1e-3
}
fn default_angle_slack() -> f64 {
    1e-9
}
fn default_limit_tol() -> f64 {
    1e-3
}

/// Parameters of [`opposite_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OppositeConfig {
    #[serde(default = "default_deltas")]
    pub delta_schedule: Vec<f64>,
    #[serde(default = "doubling_schedule")]
    pub n_schedule: Vec<usize>,
    #[serde(default = "default_eps")]
    pub epsilon_schedule: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol_angle")]
    pub tol_angle: f64,
    /// Slack in the angle bound between diagonal elements.
    #[serde(default = "default_angle_slack")]
    pub angle_slack: f64,
    /// Allowed distance between the limit vector and the opposite of
    /// `log_b x`, where that opposite exists.
    #[serde(default = "default_limit_tol")]
    pub limit_tol: f64,
}

impl Default for OppositeConfig {
    fn default() -> Self {
        OppositeConfig {
            delta_schedule: default_deltas(),
            n_schedule: doubling_schedule(),
            epsilon_schedule: default_eps(),
            replicates: default_replicates(),
            seed: 0,
            tol_angle: default_tol_angle(),
            angle_slack: default_angle_slack(),
            limit_tol: default_limit_tol(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OppositeOutcome {
    pub limit_vector: TangentVector,
    /// Smallest `cos ∠(log_b x, y)` along the diagonal.
    pub cos_angle: f64,
    /// One element per ball radius, the one with the smallest cosine.
    pub diagonal: Vec<TangentVector>,
    pub diagonal_cos: Vec<f64>,
    /// Worst excess in `∠(y_k, y_l) <= 2π - ∠(y_k, x) - ∠(x, y_l)`.
    pub angle_bound_excess: f64,
    /// `|limit - (-log_b x)|`, when `log_b x` has an opposite.
    pub limit_defect: Option<f64>,
    pub report: VerificationReport,
}

/// Runs [`approx_sequence`] with `U = {log_b x}` over shrinking balls around
/// `x`, keeps from each ball radius the element of the sequences closest in
/// direction to the opposite of `log_b x`, and checks the angle bound that
/// makes these directions Cauchy. The limit vector is the construction
/// applied to `P` itself at the smallest radius.
pub fn opposite_search(
    s: &SpaceDescriptor,
    p: &FiniteMeasure,
    b: &Point,
    x: &Point,
    cfg: &OppositeConfig,
) -> std::result::Result<OppositeOutcome, VerifyError> {
    if cfg.delta_schedule.is_empty() {
        return Err(GeometryError::input("delta_schedule must be non-empty").into());
    }
    if s.dist(b, x) <= 0.0 {
        return Err(GeometryError::input("x must differ from the base point").into());
    }
    let lx = s.log_map(b, x)?;
    let nx = lx.magnitude();
    let mut diagonal = Vec::with_capacity(cfg.delta_schedule.len());
    let mut diagonal_cos = Vec::with_capacity(cfg.delta_schedule.len());
    let mut population = None;
    for (k, &delta) in cfg.delta_schedule.iter().enumerate() {
        let acfg = ApproxConfig {
            ball_center: x.clone(),
            ball_radius: delta,
            test_set: vec![lx.clone()],
            epsilon_schedule: cfg.epsilon_schedule.clone(),
            n_schedule: cfg.n_schedule.clone(),
            replicates: cfg.replicates,
            seed: derive_seed(cfg.seed, k as u64),
            inner_slack: default_inner_slack(),
            norm_rel_tol: default_norm_rel_tol(),
            norm_abs_slack: default_norm_abs_slack(),
        };
        let out = approx_sequence(s, p, b, &acfg)?;
        let mut best: Option<(f64, &TangentVector)> = None;
        for y in out.replicate_sequences.iter().flatten() {
            let ny = y.magnitude();
            if ny == 0.0 {
                continue;
            }
            let c = (lx.inner(y)? / (nx * ny)).clamp(-1.0, 1.0);
            if best.is_none_or(|(bc, _)| c < bc) {
                best = Some((c, y));
            }
        }
        if let Some((c, y)) = best {
            diagonal.push(y.clone());
            diagonal_cos.push(c);
        }
        population = Some(out.population);
    }
    let limit_vector = population.expect("non-empty schedule");
    if diagonal.is_empty() {
        return Err(GeometryError::input("every approximation vanished; no direction to compare").into());
    }
    let cos_angle = diagonal_cos.iter().copied().fold(f64::INFINITY, f64::min);

    let mut angle_bound_excess = f64::NEG_INFINITY;
    for i in 0..diagonal.len() {
        for j in i + 1..diagonal.len() {
            let lhs = diagonal[i].angle(&diagonal[j])?;
            let rhs = 2.0 * PI - diagonal[i].angle(&lx)? - lx.angle(&diagonal[j])?;
            angle_bound_excess = angle_bound_excess.max(lhs - rhs);
        }
    }

    let limit_defect = match lx.neg() {
        Some(opp) => Some(limit_vector.distance(&opp)?),
        None => None,
    };
    let mut claims = vec![(cos_angle + 1.0, cfg.tol_angle)];
    if angle_bound_excess.is_finite() {
        claims.push((angle_bound_excess, cfg.angle_slack));
    }
    if let Some(d) = limit_defect {
        claims.push((d, cfg.limit_tol));
    }
    let mut report = VerificationReport::composite("opposite", &claims, 1e-12, cfg.seed)
        .with("cos_angle", cos_angle)
        .with("diagonal_cos", diagonal_cos.clone())
        .with("limit_norm", limit_vector.magnitude())
        .with("log_norm", nx);
    if angle_bound_excess.is_finite() {
        report = report.with("angle_bound_excess", angle_bound_excess);
    }
    if let Some(d) = limit_defect {
        report = report.with("limit_defect", d);
    }
    Ok(OppositeOutcome {
        limit_vector,
        cos_angle,
        diagonal,
        diagonal_cos,
        angle_bound_excess,
        limit_defect,
        report,
    })
}
