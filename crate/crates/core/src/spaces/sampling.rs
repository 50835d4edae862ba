//! Uniform sampling on bounded regions of each space family.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{dot, minkowski, Point, SpaceDescriptor};
use crate::error::{GeometryError, Result};
use crate::rng::seeded;
use crate::tangent::Tangent;

/// Region from which random points are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Bounds {
    /// Axis-aligned box `[lo, hi]^dim` (Euclidean).
    Box { lo: f64, hi: f64 },
    /// Geodesic cap of the given arc-length radius (Sphere). The default
    /// center is `radius * e_last`.
    Cap {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Point>,
    },
    /// Geodesic ball (Hyperbolic). The default center is the hyperboloid vertex.
    Ball {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Point>,
    },
    /// `rho <= rho_max` (FlatCone).
    Disk { rho_max: f64 },
    /// Bounds of the two factors of a product.
    Pair { left: Box<Bounds>, right: Box<Bounds> },
}

impl Bounds {
    /// A reasonable default region for a space.
    pub fn default_for(s: &SpaceDescriptor) -> Bounds {
        match s {
            SpaceDescriptor::Euclidean { .. } => Bounds::Box { lo: -1.0, hi: 1.0 },
            SpaceDescriptor::Sphere { radius, .. } => Bounds::Cap {
                radius: 0.6 * radius,
                center: None,
            },
            SpaceDescriptor::Hyperbolic { curvature, .. } => Bounds::Ball {
                radius: SpaceDescriptor::hyperbolic_radius(*curvature),
                center: None,
            },
            SpaceDescriptor::FlatCone { .. } => Bounds::Disk { rho_max: 1.0 },
            SpaceDescriptor::Product { left, right } => Bounds::Pair {
                left: Box::new(Bounds::default_for(left)),
                right: Box::new(Bounds::default_for(right)),
            },
        }
    }

    /// Checks that the region is non-degenerate and matches the space family.
    pub fn validate(&self, s: &SpaceDescriptor) -> Result<()> {
        match (s, self) {
            (SpaceDescriptor::Euclidean { .. }, Bounds::Box { lo, hi }) => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(GeometryError::input(format!("degenerate box [{lo}, {hi}]")));
                }
            }
            (SpaceDescriptor::Sphere { radius: r, .. }, Bounds::Cap { radius, center }) => {
                if !(radius.is_finite() && *radius > 0.0 && *radius <= std::f64::consts::PI * r) {
                    return Err(GeometryError::input(format!(
                        "cap radius must lie in (0, pi r], got {radius}"
                    )));
                }
                if let Some(c) = center {
                    s.check_point(c)?;
                }
            }
            (SpaceDescriptor::Hyperbolic { .. }, Bounds::Ball { radius, center }) => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(GeometryError::input(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
                if let Some(c) = center {
                    s.check_point(c)?;
                }
            }
            (SpaceDescriptor::FlatCone { .. }, Bounds::Disk { rho_max }) => {
                if !(rho_max.is_finite() && *rho_max > 0.0) {
                    return Err(GeometryError::input(format!(
                        "rho_max must be positive, got {rho_max}"
                    )));
                }
            }
            (SpaceDescriptor::Product { left, right }, Bounds::Pair { left: bl, right: br }) => {
                bl.validate(left)?;
                br.validate(right)?;
            }
            _ => {
                return Err(GeometryError::input(format!(
                    "bounds {self:?} do not match the space family"
                )))
            }
        }
        Ok(())
    }
}

/// Deterministic sample for a fixed seed.
pub fn random_point(s: &SpaceDescriptor, seed: u64, bounds: &Bounds) -> Result<Point> {
    let mut rng = seeded(seed);
    sample_point(s, bounds, &mut rng)
}

/// Draws a point uniformly (w.r.t. the Riemannian volume) from `bounds`.
pub fn sample_point<R: Rng + ?Sized>(s: &SpaceDescriptor, bounds: &Bounds, rng: &mut R) -> Result<Point> {
    bounds.validate(s)?;
    Ok(draw(s, bounds, rng))
}

fn gaussian_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Radial coordinate with density proportional to `weight(r)^(dim-1)` on
/// `[0, rmax]`, by rejection against the bound `wmax`.
fn radial<R: Rng + ?Sized>(
    dim: usize,
    rmax: f64,
    wmax: f64,
    weight: impl Fn(f64) -> f64,
    rng: &mut R,
) -> f64 {
    loop {
        let r = rmax * rng.random::<f64>();
        if dim == 1 {
            return r;
        }
        let accept = (weight(r) / wmax).powi(dim as i32 - 1);
        if rng.random::<f64>() <= accept {
            return r;
        }
    }
}

fn draw<R: Rng + ?Sized>(s: &SpaceDescriptor, bounds: &Bounds, rng: &mut R) -> Point {
    match (s, bounds) {
        (SpaceDescriptor::Euclidean { dim }, Bounds::Box { lo, hi }) => {
            Point::new((0..*dim).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
        }
        (SpaceDescriptor::Sphere { dim, radius }, Bounds::Cap { radius: cap, center }) => {
            let c = center.clone().unwrap_or_else(|| {
                let mut v = vec![0.0; dim + 1];
                v[*dim] = *radius;
                Point::new(v)
            });
            let alpha = cap / radius;
            let wmax = alpha.min(std::f64::consts::FRAC_PI_2).sin();
            let psi = radial(*dim, alpha, wmax, f64::sin, rng);
            // uniform direction in the tangent hyperplane at c
            let dir = loop {
                let g = gaussian_vec(dim + 1, rng);
                let k = dot(&g, c.coords()) / (radius * radius);
                let w: Vec<f64> = g.iter().zip(c.coords()).map(|(a, b)| a - k * b).collect();
                let n = dot(&w, &w).sqrt();
                if n > 1e-8 {
                    break w.into_iter().map(|x| x / n).collect::<Vec<_>>();
                }
            };
            let v = Tangent::Flat(dir.into_iter().map(|x| x * psi * radius).collect());
            s.exp_raw(&c, &v)
        }
        (SpaceDescriptor::Hyperbolic { dim, curvature }, Bounds::Ball { radius: ball, center }) => {
            let r = SpaceDescriptor::hyperbolic_radius(*curvature);
            let c = center.clone().unwrap_or_else(|| {
                let mut v = vec![0.0; dim + 1];
                v[0] = r;
                Point::new(v)
            });
            let wmax = (ball / r).sinh();
            let rho = radial(*dim, *ball, wmax, |x| (x / r).sinh(), rng);
            let dir = loop {
                let mut g = gaussian_vec(dim + 1, rng);
                g[0] = 0.0;
                // project onto the Minkowski-orthogonal complement of c
                let k = minkowski(&g, c.coords()) / (r * r);
                let w: Vec<f64> = g.iter().zip(c.coords()).map(|(a, b)| a + k * b).collect();
                let n = minkowski(&w, &w).max(0.0).sqrt();
                if n > 1e-8 {
                    break w.into_iter().map(|x| x / n).collect::<Vec<_>>();
                }
            };
            let v = Tangent::Lorentz(dir.into_iter().map(|x| x * rho).collect());
            s.exp_raw(&c, &v)
        }
        (SpaceDescriptor::FlatCone { total_angle }, Bounds::Disk { rho_max }) => {
            let rho = rho_max * rng.random::<f64>().sqrt();
            let phi = total_angle * rng.random::<f64>();
            s.canonicalize(Point::new(vec![rho, phi]))
        }
        (SpaceDescriptor::Product { left, right }, Bounds::Pair { left: bl, right: br }) => {
            let a = draw(left, bl, rng);
            let b = draw(right, br, rng);
            Point::join(a, b)
        }
        _ => unreachable!("bounds validated before drawing"),
    }
}
