//! Concrete Alexandrov spaces with curvature bounded below.
//!
//! Every space exposes the same small metric interface: chart validation,
//! distances and constant-speed geodesics. Points are plain coordinate
//! records; the chart convention for each family is:
//!
//! | family     | coordinates                                              |
//! |------------|----------------------------------------------------------|
//! | Euclidean  | Cartesian, `dim` entries                                 |
//! | Sphere     | ambient vector in `R^{dim+1}` of norm `radius`           |
//! | Hyperbolic | hyperboloid vector with Minkowski norm `-1/|curvature|`  |
//! | FlatCone   | `(rho, phi)` with `rho >= 0`, `phi in [0, total_angle)`  |
//! | Product    | left coordinates followed by right coordinates           |

mod model;
mod sampling;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};

pub use model::{comparison_distance, comparison_margin};
pub use sampling::{random_point, sample_point, Bounds};

/// Tolerance applied to chart constraints of input points.
pub const CHART_TOL: f64 = 1e-12;

/// Tolerance applied to outputs of iterative routines.
pub const OUTPUT_TOL: f64 = 1e-9;

/// Which concrete space all points of a computation belong to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceDescriptor {
    Euclidean {
        dim: usize,
    },
    Sphere {
        dim: usize,
        radius: f64,
    },
    Hyperbolic {
        dim: usize,
        curvature: f64,
    },
    FlatCone {
        total_angle: f64,
    },
    Product {
        left: Box<SpaceDescriptor>,
        right: Box<SpaceDescriptor>,
    },
}

/// A point of a space, stored in the chart of its family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    /// Wraps raw coordinates. No validation happens here; every public
    /// operation of [`SpaceDescriptor`] checks its inputs.
    pub fn new(coords: Vec<f64>) -> Self {
        Point { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub(crate) fn split(&self, at: usize) -> (Point, Point) {
        (
            Point::new(self.coords[..at].to_vec()),
            Point::new(self.coords[at..].to_vec()),
        )
    }

    pub(crate) fn join(left: Point, right: Point) -> Point {
        let mut coords = left.coords;
        coords.extend(right.coords);
        Point { coords }
    }

    /// Lexicographic comparison of coordinates, used for deterministic tie-breaks.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        for (a, b) in self.coords.iter().zip(&other.coords) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        self.coords.len().cmp(&other.coords.len())
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minkowski product `-a0 b0 + sum_i ai bi`.
pub(crate) fn minkowski(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + dot(&a[1..], &b[1..])
}

pub(crate) fn is_full_turn(total_angle: f64) -> bool {
    (total_angle - 2.0 * PI).abs() <= CHART_TOL
}

/// Wraps an angle into `[0, period)`.
pub(crate) fn wrap_angle(phi: f64, period: f64) -> f64 {
    let w = phi.rem_euclid(period);
    if w >= period {
        0.0
    } else {
        w
    }
}

/// Signed angular offset from `from` to `to` on a circle of length `period`,
/// in `(-period/2, period/2]`.
pub(crate) fn signed_offset(from: f64, to: f64, period: f64) -> f64 {
    let d = (to - from).rem_euclid(period);
    if d > 0.5 * period {
        d - period
    } else {
        d
    }
}

impl SpaceDescriptor {
    pub fn euclidean(dim: usize) -> Self {
        SpaceDescriptor::Euclidean { dim }
    }

    pub fn sphere(dim: usize, radius: f64) -> Self {
        SpaceDescriptor::Sphere { dim, radius }
    }

    pub fn hyperbolic(dim: usize, curvature: f64) -> Self {
        SpaceDescriptor::Hyperbolic { dim, curvature }
    }

    pub fn flat_cone(total_angle: f64) -> Self {
        SpaceDescriptor::FlatCone { total_angle }
    }

    pub fn product(left: SpaceDescriptor, right: SpaceDescriptor) -> Self {
        SpaceDescriptor::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Checks the descriptor's own invariants.
    pub fn validate(&self) -> Result<()> {
        match self {
            SpaceDescriptor::Euclidean { dim } => {
                if *dim == 0 {
                    return Err(GeometryError::input("euclidean dim must be >= 1"));
                }
            }
            SpaceDescriptor::Sphere { dim, radius } => {
                if *dim == 0 {
                    return Err(GeometryError::input("sphere dim must be >= 1"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::input(format!(
                        "sphere radius must be positive, got {radius}"
                    )));
                }
            }
            SpaceDescriptor::Hyperbolic { dim, curvature } => {
                if *dim == 0 {
                    return Err(GeometryError::input("hyperbolic dim must be >= 1"));
                }
                if !(curvature.is_finite() && *curvature < 0.0) {
                    return Err(GeometryError::input(format!(
                        "hyperbolic curvature must be negative, got {curvature}"
                    )));
                }
            }
            SpaceDescriptor::FlatCone { total_angle } => {
                if !(total_angle.is_finite()
                    && *total_angle > 0.0
                    && *total_angle <= 2.0 * PI + CHART_TOL)
                {
                    return Err(GeometryError::input(format!(
                        "cone total angle must lie in (0, 2pi], got {total_angle}"
                    )));
                }
            }
            SpaceDescriptor::Product { left, right } => {
                left.validate()?;
                right.validate()?;
            }
        }
        Ok(())
    }

    /// Lower curvature bound of the space.
    pub fn kappa_lower(&self) -> f64 {
        match self {
            SpaceDescriptor::Euclidean { .. } | SpaceDescriptor::FlatCone { .. } => 0.0,
            SpaceDescriptor::Sphere { radius, .. } => 1.0 / (radius * radius),
            SpaceDescriptor::Hyperbolic { curvature, .. } => *curvature,
            SpaceDescriptor::Product { left, right } => {
                left.kappa_lower().min(right.kappa_lower()).min(0.0)
            }
        }
    }

    /// Number of chart coordinates of a point.
    pub fn chart_len(&self) -> usize {
        match self {
            SpaceDescriptor::Euclidean { dim } => *dim,
            SpaceDescriptor::Sphere { dim, .. } | SpaceDescriptor::Hyperbolic { dim, .. } => {
                dim + 1
            }
            SpaceDescriptor::FlatCone { .. } => 2,
            SpaceDescriptor::Product { left, right } => left.chart_len() + right.chart_len(),
        }
    }

    /// Dimension of the tangent cone (as a manifold chart dimension).
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            SpaceDescriptor::Euclidean { dim }
            | SpaceDescriptor::Sphere { dim, .. }
            | SpaceDescriptor::Hyperbolic { dim, .. } => *dim,
            SpaceDescriptor::FlatCone { .. } => 2,
            SpaceDescriptor::Product { left, right } => {
                left.intrinsic_dim() + right.intrinsic_dim()
            }
        }
    }

    pub(crate) fn hyperbolic_radius(curvature: f64) -> f64 {
        1.0 / (-curvature).sqrt()
    }

    /// Checks that `p` satisfies the chart constraint of this space.
    pub fn check_point(&self, p: &Point) -> Result<()> {
        let c = p.coords();
        if c.len() != self.chart_len() {
            return Err(GeometryError::input(format!(
                "point has {} coordinates, space expects {}",
                c.len(),
                self.chart_len()
            )));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::input("point has non-finite coordinates"));
        }
        match self {
            SpaceDescriptor::Euclidean { .. } => Ok(()),
            SpaceDescriptor::Sphere { radius, .. } => {
                let n = norm(c);
                if (n - radius).abs() > CHART_TOL * radius.max(1.0) {
                    return Err(GeometryError::input(format!(
                        "sphere point has norm {n}, expected {radius}"
                    )));
                }
                Ok(())
            }
            SpaceDescriptor::Hyperbolic { curvature, .. } => {
                let r = Self::hyperbolic_radius(*curvature);
                let q = minkowski(c, c);
                if c[0] <= 0.0 || (q + r * r).abs() > CHART_TOL * (c[0] * c[0]).max(1.0) {
                    return Err(GeometryError::input(format!(
                        "hyperboloid constraint violated: <x,x> = {q}, expected {}",
                        -r * r
                    )));
                }
                Ok(())
            }
            SpaceDescriptor::FlatCone { total_angle } => {
                let (rho, phi) = (c[0], c[1]);
                if rho < 0.0 {
                    return Err(GeometryError::input(format!("cone radius {rho} < 0")));
                }
                if phi < -CHART_TOL || phi >= total_angle + CHART_TOL {
                    return Err(GeometryError::input(format!(
                        "cone angle {phi} outside [0, {total_angle})"
                    )));
                }
                Ok(())
            }
            SpaceDescriptor::Product { left, right } => {
                let (a, b) = p.split(left.chart_len());
                left.check_point(&a)?;
                right.check_point(&b)
            }
        }
    }

    /// Validates `coords` and returns the canonical point.
    pub fn point(&self, coords: Vec<f64>) -> Result<Point> {
        let p = Point::new(coords);
        self.check_point(&p)?;
        Ok(self.canonicalize(p))
    }

    /// Projects a point onto its chart (renormalisation, angle wrapping,
    /// apex canonicalisation). Does not validate.
    pub(crate) fn canonicalize(&self, p: Point) -> Point {
        match self {
            SpaceDescriptor::Euclidean { .. } => p,
            SpaceDescriptor::Sphere { radius, .. } => {
                let n = norm(p.coords());
                if n == 0.0 {
                    return p;
                }
                Point::new(p.coords.iter().map(|v| v * radius / n).collect())
            }
            SpaceDescriptor::Hyperbolic { curvature, .. } => {
                let r = Self::hyperbolic_radius(*curvature);
                let mut c = p.coords;
                let spatial = dot(&c[1..], &c[1..]);
                c[0] = (r * r + spatial).sqrt();
                Point::new(c)
            }
            SpaceDescriptor::FlatCone { total_angle } => {
                let rho = p.coords[0].max(0.0);
                if rho == 0.0 {
                    Point::new(vec![0.0, 0.0])
                } else {
                    Point::new(vec![rho, wrap_angle(p.coords[1], *total_angle)])
                }
            }
            SpaceDescriptor::Product { left, right } => {
                let (a, b) = p.split(left.chart_len());
                Point::join(left.canonicalize(a), right.canonicalize(b))
            }
        }
    }

    /// True where the tangent cone is not a vector space: the apex of a cone
    /// with total angle below `2pi`, or a product containing one.
    pub fn is_singular(&self, p: &Point) -> bool {
        match self {
            SpaceDescriptor::FlatCone { total_angle } => {
                p.coords[0] == 0.0 && !is_full_turn(*total_angle)
            }
            SpaceDescriptor::Product { left, right } => {
                let (a, b) = p.split(left.chart_len());
                left.is_singular(&a) || right.is_singular(&b)
            }
            _ => false,
        }
    }

    /// The apex of a flat cone; `None` for every other family.
    pub fn apex(&self) -> Option<Point> {
        match self {
            SpaceDescriptor::FlatCone { .. } => Some(Point::new(vec![0.0, 0.0])),
            _ => None,
        }
    }

    /// Geodesic distance between two valid points.
    pub fn distance(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self.dist(p, q))
    }

    /// Distance without input validation.
    pub(crate) fn dist(&self, p: &Point, q: &Point) -> f64 {
        self.dist_sq(p, q).sqrt()
    }

    pub(crate) fn dist_sq(&self, p: &Point, q: &Point) -> f64 {
        let (a, b) = (p.coords(), q.coords());
        match self {
            SpaceDescriptor::Euclidean { .. } => {
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
            }
            SpaceDescriptor::Sphere { radius, .. } => {
                // 2 atan2(|x - y|, |x + y|) is accurate at every separation.
                let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                let sum: f64 = a.iter().zip(b).map(|(x, y)| (x + y) * (x + y)).sum();
                let d = radius * 2.0 * diff.sqrt().atan2(sum.sqrt());
                d * d
            }
            SpaceDescriptor::Hyperbolic { curvature, .. } => {
                let r = Self::hyperbolic_radius(*curvature);
                let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                let chord = minkowski(&diff, &diff).max(0.0).sqrt();
                let d = 2.0 * r * (chord / (2.0 * r)).asinh();
                d * d
            }
            SpaceDescriptor::FlatCone { total_angle } => {
                let (rp, rq) = (a[0], b[0]);
                let raw = (a[1] - b[1]).abs();
                let dphi = raw.min(total_angle - raw).max(0.0);
                // law of cosines in the form (rp - rq)^2 + 4 rp rq sin^2(dphi/2)
                let s = (0.5 * dphi).sin();
                (rp - rq) * (rp - rq) + 4.0 * rp * rq * s * s
            }
            SpaceDescriptor::Product { left, right } => {
                let k = left.chart_len();
                let (pl, pr) = p.split(k);
                let (ql, qr) = q.split(k);
                left.dist_sq(&pl, &ql) + right.dist_sq(&pr, &qr)
            }
        }
    }

    /// Point at fraction `t` along the geodesic from `p` to `q`.
    pub fn geodesic_point(&self, p: &Point, q: &Point, t: f64) -> Result<Point> {
        self.check_point(p)?;
        self.check_point(q)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(GeometryError::input(format!("geodesic parameter {t} outside [0,1]")));
        }
        let v = self.log_unchecked(p, q, crate::tangent::TieBreak::Error)?;
        self.exp_unchecked(p, &v.scaled(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn cone_unroll_oracle(theta: f64, p: (f64, f64), q: (f64, f64)) -> f64 {
        // Develop the cone into the plane: cut along the ray opposite to p,
        // place p on the x-axis and q at its shortest angular offset.
        let mut off = (q.1 - p.1).rem_euclid(theta);
        if off > theta / 2.0 {
            off -= theta;
        }
        let (px, py) = (p.0, 0.0);
        let (qx, qy) = (q.0 * off.cos(), q.0 * off.sin());
        (px - qx).hypot(py - qy)
    }

    #[test]
    fn euclidean_pythagoras() {
        let s = SpaceDescriptor::euclidean(2);
        let d = s
            .distance(&Point::new(vec![0.0, 0.0]), &Point::new(vec![3.0, 4.0]))
            .unwrap();
        assert!((d - 5.0).abs() < 1e-15);
    }

    #[test]
    fn sphere_quarter_circle() {
        let s = SpaceDescriptor::sphere(2, 1.0);
        let d = s
            .distance(&Point::new(vec![1.0, 0.0, 0.0]), &Point::new(vec![0.0, 1.0, 0.0]))
            .unwrap();
        assert!((d - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn cone_distance_matches_unrolled_chord() {
        let s = SpaceDescriptor::flat_cone(PI);
        let d = s
            .distance(&Point::new(vec![1.0, 0.0]), &Point::new(vec![1.0, 0.9 * PI]))
            .unwrap();
        let oracle = cone_unroll_oracle(PI, (1.0, 0.0), (1.0, 0.9 * PI));
        let closed = (2.0 - 2.0 * (0.1 * PI).cos()).sqrt();
        assert!((oracle - closed).abs() < 1e-14);
        assert!((d - 0.312_868_930_080_462).abs() < 1e-12, "{d}");
        assert!((d - oracle).abs() < 1e-14);
    }

    #[test]
    fn cone_distance_random_pairs_match_oracle() {
        use rand::Rng;
        let mut rng = seeded(7);
        for &theta in &[PI / 2.0, PI, 1.5 * PI, 2.0 * PI] {
            let s = SpaceDescriptor::flat_cone(theta);
            for _ in 0..1000 {
                let p = (3.0 * rng.random::<f64>(), theta * rng.random::<f64>());
                let q = (3.0 * rng.random::<f64>(), theta * rng.random::<f64>());
                let d = s
                    .distance(&Point::new(vec![p.0, p.1]), &Point::new(vec![q.0, q.1]))
                    .unwrap();
                assert!((d - cone_unroll_oracle(theta, p, q)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn apex_distance_is_radius() {
        let s = SpaceDescriptor::flat_cone(1.5 * PI);
        let d = s
            .distance(&Point::new(vec![0.0, 0.0]), &Point::new(vec![2.5, 1.0]))
            .unwrap();
        assert_eq!(d, 2.5);
    }

    #[test]
    fn kappa_lower_per_family() {
        assert_eq!(SpaceDescriptor::euclidean(3).kappa_lower(), 0.0);
        assert_eq!(SpaceDescriptor::sphere(2, 2.0).kappa_lower(), 0.25);
        assert_eq!(SpaceDescriptor::hyperbolic(2, -0.5).kappa_lower(), -0.5);
        assert_eq!(SpaceDescriptor::flat_cone(PI).kappa_lower(), 0.0);
        let prod = SpaceDescriptor::product(
            SpaceDescriptor::sphere(2, 1.0),
            SpaceDescriptor::hyperbolic(2, -2.0),
        );
        assert_eq!(prod.kappa_lower(), -2.0);
        let prod = SpaceDescriptor::product(
            SpaceDescriptor::sphere(2, 1.0),
            SpaceDescriptor::sphere(1, 1.0),
        );
        assert_eq!(prod.kappa_lower(), 0.0);
    }

    #[test]
    fn invalid_descriptors_rejected() {
        assert!(SpaceDescriptor::euclidean(0).validate().is_err());
        assert!(SpaceDescriptor::sphere(2, 0.0).validate().is_err());
        assert!(SpaceDescriptor::hyperbolic(2, 0.5).validate().is_err());
        assert!(SpaceDescriptor::flat_cone(7.0).validate().is_err());
        assert!(SpaceDescriptor::flat_cone(0.0).validate().is_err());
        assert!(SpaceDescriptor::flat_cone(2.0 * PI).validate().is_ok());
    }

    #[test]
    fn chart_violations_are_input_errors() {
        let s = SpaceDescriptor::sphere(2, 1.0);
        let bad = Point::new(vec![1.0, 1.0, 0.0]);
        let ok = Point::new(vec![1.0, 0.0, 0.0]);
        assert!(matches!(s.distance(&bad, &ok), Err(GeometryError::Input(_))));
        // a point of a different space
        let short = Point::new(vec![1.0, 0.0]);
        assert!(matches!(s.distance(&short, &ok), Err(GeometryError::Input(_))));
        let h = SpaceDescriptor::hyperbolic(2, -1.0);
        assert!(h.check_point(&Point::new(vec![1.0, 0.0, 0.0])).is_ok());
        assert!(h.check_point(&Point::new(vec![-1.0, 0.0, 0.0])).is_err());
        let c = SpaceDescriptor::flat_cone(PI);
        assert!(c.check_point(&Point::new(vec![-0.1, 0.0])).is_err());
        assert!(c.check_point(&Point::new(vec![1.0, 3.5])).is_err());
    }

    #[test]
    fn cone_apex_is_canonical() {
        let c = SpaceDescriptor::flat_cone(PI);
        let p = c.point(vec![0.0, 2.0]).unwrap();
        assert_eq!(p.coords(), &[0.0, 0.0]);
        assert!(c.is_singular(&p));
        let full = SpaceDescriptor::flat_cone(2.0 * PI);
        assert!(!full.is_singular(&p));
    }

    #[test]
    fn geodesic_examples() {
        let e = SpaceDescriptor::euclidean(2);
        let m = e
            .geodesic_point(&Point::new(vec![0.0, 0.0]), &Point::new(vec![2.0, 0.0]), 0.5)
            .unwrap();
        assert!((m.coords()[0] - 1.0).abs() < 1e-15 && m.coords()[1].abs() < 1e-15);

        let c = SpaceDescriptor::flat_cone(1.2);
        let g = c
            .geodesic_point(&Point::new(vec![0.0, 0.0]), &Point::new(vec![1.0, 0.7]), 0.25)
            .unwrap();
        assert!((g.coords()[0] - 0.25).abs() < 1e-15);
        assert!((g.coords()[1] - 0.7).abs() < 1e-15);

        let s = SpaceDescriptor::sphere(2, 1.0);
        let g = s
            .geodesic_point(
                &Point::new(vec![1.0, 0.0, 0.0]),
                &Point::new(vec![0.0, 1.0, 0.0]),
                0.5,
            )
            .unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert!((g.coords()[0] - h).abs() < 1e-15);
        assert!((g.coords()[1] - h).abs() < 1e-15);
        assert!(g.coords()[2].abs() < 1e-15);
    }

    #[test]
    fn antipodal_geodesic_is_ambiguous() {
        let s = SpaceDescriptor::sphere(2, 1.0);
        let r = s.geodesic_point(
            &Point::new(vec![0.0, 0.0, 1.0]),
            &Point::new(vec![0.0, 0.0, -1.0]),
            0.5,
        );
        assert!(matches!(r, Err(GeometryError::AmbiguousGeodesic(_))));
    }

    #[test]
    fn signed_offset_is_shortest() {
        assert!((signed_offset(0.1, 0.3, 1.0) - 0.2).abs() < 1e-15);
        assert!((signed_offset(0.1, 0.9, 1.0) + 0.2).abs() < 1e-15);
        assert!((signed_offset(0.9, 0.1, 1.0) - 0.2).abs() < 1e-15);
    }
}
