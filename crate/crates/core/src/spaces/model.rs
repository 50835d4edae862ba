//! Comparison triangles in the model surfaces `M_kappa`.

use super::{Point, SpaceDescriptor};
use crate::error::{GeometryError, Result};

/// Distance in `M_kappa` from the vertex `y~` of the comparison triangle with
/// side lengths `a = d(y, x0)`, `b = d(y, x1)`, `c = d(x0, x1)` to the point at
/// fraction `t` along the side `x0~ x1~`.
///
/// The triangle is placed explicitly: `x0~` at the origin of the model chart,
/// `x1~` along the first axis, `y~` at the unique point with the two prescribed
/// distances. `None` when no comparison triangle exists (spherical triangle
/// with an antipodal base side).
pub fn comparison_distance(kappa: f64, a: f64, b: f64, c: f64, t: f64) -> Option<f64> {
    if c <= 1e-300 {
        return Some(a);
    }
    if kappa == 0.0 {
        // y~ = (u, h), x_t~ = (t c, 0)
        let u = (a * a + c * c - b * b) / (2.0 * c);
        let h2 = (a * a - u * u).max(0.0);
        let dx = u - t * c;
        return Some((dx * dx + h2).sqrt());
    }
    if kappa > 0.0 {
        let k = kappa.sqrt();
        let (ka, kb, kc) = (k * a, k * b, k * c);
        let sc = kc.sin();
        if sc.abs() < 1e-12 {
            return None;
        }
        // unit sphere: x0~ = e1, x1~ = (cos C, sin C, 0)
        let y1 = ka.cos();
        let y2 = (kb.cos() - ka.cos() * kc.cos()) / sc;
        let y3 = (1.0 - y1 * y1 - y2 * y2).max(0.0).sqrt();
        let xt = [(t * kc).cos(), (t * kc).sin(), 0.0];
        let y = [y1, y2, y3];
        let diff: f64 = (0..3).map(|i| (y[i] - xt[i]).powi(2)).sum();
        let sum: f64 = (0..3).map(|i| (y[i] + xt[i]).powi(2)).sum();
        return Some(2.0 * diff.sqrt().atan2(sum.sqrt()) / k);
    }
    let k = (-kappa).sqrt();
    let (ka, kb, kc) = (k * a, k * b, k * c);
    // unit hyperboloid: x0~ = (1,0,0), x1~ = (cosh C, sinh C, 0)
    let y0 = ka.cosh();
    let y1 = (ka.cosh() * kc.cosh() - kb.cosh()) / kc.sinh();
    let y2 = (y0 * y0 - 1.0 - y1 * y1).max(0.0).sqrt();
    let xt = [(t * kc).cosh(), (t * kc).sinh(), 0.0];
    let d = [y0 - xt[0], y1 - xt[1], y2 - xt[2]];
    let chord2 = (-d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).max(0.0);
    Some(2.0 * (0.5 * chord2.sqrt()).asinh() / k)
}

/// `d(y, x_t) - d(y~, x_t~)` for the comparison triangle in `M_kappa` with
/// `kappa = s.kappa_lower()`. Non-negative (up to rounding) in a space of
/// curvature bounded below by `kappa`.
pub fn comparison_margin(s: &SpaceDescriptor, x0: &Point, x1: &Point, y: &Point, t: f64) -> Result<f64> {
    let xt = s.geodesic_point(x0, x1, t)?;
    let a = s.dist(y, x0);
    let b = s.dist(y, x1);
    let c = s.dist(x0, x1);
    let model = comparison_distance(s.kappa_lower(), a, b, c, t).ok_or_else(|| {
        GeometryError::AmbiguousGeodesic("no comparison triangle for an antipodal base side".into())
    })?;
    Ok(s.dist(y, &xt) - model)
}
