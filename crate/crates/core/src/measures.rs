//! Finite-support probability measures, empirical measures and pushforwards
//! under the logarithm map.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::rng::seeded;
use crate::spaces::{sample_point, Bounds, Point, SpaceDescriptor};
use crate::tangent::{Tangent, TangentVector, TieBreak};

/// Weights must sum to one within this tolerance before renormalisation.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Atoms closer than this are merged.
pub const MERGE_TOL: f64 = 1e-12;

/// A probability measure with finitely many atoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteMeasure {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl FiniteMeasure {
    /// Builds a measure from atoms whose weights already sum to one (within
    /// [`NORMALIZATION_TOL`]). Weights are renormalised exactly and atoms
    /// closer than [`MERGE_TOL`] are merged.
    pub fn new(s: &SpaceDescriptor, support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(GeometryError::input(format!(
                "weights sum to {total}, expected 1 within {NORMALIZATION_TOL:e}"
            )));
        }
        Self::from_weights(s, support, weights)
    }

    /// Builds a measure from arbitrary positive weights, normalising them.
    pub fn from_weights(s: &SpaceDescriptor, support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(GeometryError::input("measure needs at least one atom"));
        }
        if support.len() != weights.len() {
            return Err(GeometryError::input(format!(
                "{} atoms but {} weights",
                support.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(GeometryError::input(format!("weight {w} is not positive")));
        }
        let mut atoms: Vec<Point> = Vec::with_capacity(support.len());
        let mut mass: Vec<f64> = Vec::with_capacity(support.len());
        for (p, w) in support.into_iter().zip(weights) {
            s.check_point(&p)?;
            let p = s.canonicalize(p);
            match atoms.iter().position(|q| s.dist(q, &p) <= MERGE_TOL) {
                Some(i) => mass[i] += w,
                None => {
                    atoms.push(p);
                    mass.push(w);
                }
            }
        }
        let total: f64 = mass.iter().sum();
        mass.iter_mut().for_each(|w| *w /= total);
        Ok(FiniteMeasure {
            support: atoms,
            weights: mass,
        })
    }

    pub fn dirac(p: Point) -> Self {
        FiniteMeasure {
            support: vec![p],
            weights: vec![1.0],
        }
    }

    pub fn uniform(s: &SpaceDescriptor, support: Vec<Point>) -> Result<Self> {
        let n = support.len();
        Self::from_weights(s, support, vec![1.0; n])
    }

    /// Internal constructor for atoms that are known to be valid and distinct.
    pub(crate) fn from_parts(support: Vec<Point>, weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        FiniteMeasure {
            support,
            weights: weights.into_iter().map(|w| w / total).collect(),
        }
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn is_dirac(&self) -> bool {
        self.support.len() == 1
    }

    pub fn check(&self, s: &SpaceDescriptor) -> Result<()> {
        self.support.iter().try_for_each(|p| s.check_point(p))
    }

    /// Index of the atom within [`MERGE_TOL`] of `x`, if any.
    pub fn atom_index(&self, s: &SpaceDescriptor, x: &Point) -> Option<usize> {
        self.support.iter().position(|p| s.dist(p, x) <= MERGE_TOL)
    }

    /// Image under the projection onto the left (`true`) or right factor of a product.
    pub fn marginal(&self, s: &SpaceDescriptor, left_factor: bool) -> Result<(SpaceDescriptor, FiniteMeasure)> {
        let SpaceDescriptor::Product { left, right } = s else {
            return Err(GeometryError::input("marginal of a non-product space"));
        };
        let k = left.chart_len();
        let (space, atoms): (&SpaceDescriptor, Vec<Point>) = if left_factor {
            (left, self.support.iter().map(|p| p.split(k).0).collect())
        } else {
            (right, self.support.iter().map(|p| p.split(k).1).collect())
        };
        let m = FiniteMeasure::from_weights(space, atoms, self.weights.clone())?;
        Ok((space.clone(), m))
    }

    /// Counts of `n` i.i.d. draws per atom: a multinomial sample drawn as a
    /// chain of conditional binomials.
    pub(crate) fn draw_counts<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut counts = vec![0usize; self.len()];
        let mut left = n as u64;
        let mut mass = 1.0;
        for (i, &w) in self.weights.iter().enumerate() {
            if left == 0 {
                break;
            }
            if i + 1 == self.len() || w >= mass {
                counts[i] = left as usize;
                break;
            }
            let k = Binomial::new(left, (w / mass).clamp(0.0, 1.0))
                .expect("probability in [0, 1]")
                .sample(rng);
            counts[i] = k as usize;
            left -= k;
            mass -= w;
        }
        counts
    }

    /// Empirical measure of `n` draws given as per-atom counts.
    pub(crate) fn from_counts(&self, counts: &[usize]) -> FiniteMeasure {
        let n: usize = counts.iter().sum();
        let (support, weights) = self
            .support
            .iter()
            .zip(counts)
            .filter(|(_, &c)| c > 0)
            .map(|(p, &c)| (p.clone(), c as f64 / n as f64))
            .unzip();
        FiniteMeasure { support, weights }
    }
}

/// Anything that produces i.i.d. points of a space.
pub trait Sampler {
    fn draw(&self, rng: &mut crate::rng::Rng) -> Point;
}

/// Uniform sampling from a bounded region.
#[derive(Clone, Debug)]
pub struct RegionSampler {
    pub space: SpaceDescriptor,
    pub bounds: Bounds,
}

impl RegionSampler {
    pub fn new(space: SpaceDescriptor, bounds: Bounds) -> Result<Self> {
        bounds.validate(&space)?;
        Ok(RegionSampler { space, bounds })
    }
}

impl Sampler for RegionSampler {
    fn draw(&self, rng: &mut crate::rng::Rng) -> Point {
        sample_point(&self.space, &self.bounds, rng).expect("bounds validated at construction")
    }
}

/// Measure on `atoms` points drawn uniformly from `bounds`, with weights
/// uniform or drawn from `[0.2, 1.2)` before normalisation.
pub fn random_measure<R: Rng + ?Sized>(
    s: &SpaceDescriptor,
    bounds: &Bounds,
    atoms: usize,
    random_weights: bool,
    rng: &mut R,
) -> Result<FiniteMeasure> {
    if atoms == 0 {
        return Err(GeometryError::input("a measure needs at least one atom"));
    }
    let support = (0..atoms)
        .map(|_| sample_point(s, bounds, rng))
        .collect::<Result<Vec<_>>>()?;
    let weights = (0..atoms)
        .map(|_| if random_weights { 0.2 + rng.random::<f64>() } else { 1.0 })
        .collect();
    FiniteMeasure::from_weights(s, support, weights)
}

/// Empirical measure of `n` i.i.d. draws from a finite measure, with uniform
/// weights `1/n` and repeated atoms merged.
pub fn empirical(p: &FiniteMeasure, n: usize, seed: u64) -> Result<FiniteMeasure> {
    if n == 0 {
        return Err(GeometryError::input("empirical measure needs n >= 1"));
    }
    let mut rng = seeded(seed);
    let counts = p.draw_counts(n, &mut rng);
    Ok(p.from_counts(&counts))
}

/// Empirical measure of `n` draws from a sampler. Draws with bitwise identical
/// coordinates are merged.
pub fn empirical_from_sampler<S: Sampler>(sampler: &S, n: usize, seed: u64) -> Result<FiniteMeasure> {
    if n == 0 {
        return Err(GeometryError::input("empirical measure needs n >= 1"));
    }
    let mut rng = seeded(seed);
    let mut draws: Vec<Point> = (0..n).map(|_| sampler.draw(&mut rng)).collect();
    draws.sort_by(|a, b| a.lex_cmp(b));
    let mut support: Vec<Point> = Vec::with_capacity(n);
    let mut weights: Vec<f64> = Vec::with_capacity(n);
    for p in draws {
        if support.last() == Some(&p) {
            *weights.last_mut().unwrap() += 1.0;
        } else {
            support.push(p);
            weights.push(1.0);
        }
    }
    Ok(FiniteMeasure::from_parts(support, weights))
}

/// Pushforward of a finite measure by `log_b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentMeasure {
    pub base: Point,
    pub vectors: Vec<TangentVector>,
    pub weights: Vec<f64>,
}

impl TangentMeasure {
    pub fn new(base: Point, vectors: Vec<Tangent>, weights: Vec<f64>) -> Self {
        let vectors = vectors
            .into_iter()
            .map(|t| TangentVector::new(base.clone(), t))
            .collect();
        TangentMeasure {
            base,
            vectors,
            weights,
        }
    }

    /// `sum_i sum_j w_i w_j f(v_i, v_j)`, diagonal included.
    pub fn pair_integral<F>(&self, f: F) -> f64
    where
        F: Fn(&TangentVector, &TangentVector) -> f64,
    {
        let mut total = 0.0;
        for (wi, vi) in self.weights.iter().zip(&self.vectors) {
            let mut row = 0.0;
            for (wj, vj) in self.weights.iter().zip(&self.vectors) {
                row += wj * f(vi, vj);
            }
            total += wi * row;
        }
        total
    }

    /// `sum_{ij} w_i w_j <v_i, v_j>`.
    pub fn gram(&self) -> f64 {
        self.pair_integral(|u, v| u.tangent.inner(&v.tangent).expect("shared base chart"))
    }

    /// `sum_j w_j <u, v_j>`.
    pub fn first_order(&self, u: &Tangent) -> Result<f64> {
        let mut total = 0.0;
        for (w, v) in self.weights.iter().zip(&self.vectors) {
            total += w * u.inner(&v.tangent)?;
        }
        Ok(total)
    }
}

/// `log_b # P`. Antipodal pairs on spheres are resolved with `tie`.
pub fn log_pushforward_with(
    s: &SpaceDescriptor,
    p: &FiniteMeasure,
    b: &Point,
    tie: TieBreak,
) -> Result<TangentMeasure> {
    s.check_point(b)?;
    let vectors = p
        .support()
        .iter()
        .map(|x| s.log_unchecked(b, x, tie))
        .collect::<Result<Vec<_>>>()?;
    Ok(TangentMeasure::new(b.clone(), vectors, p.weights().to_vec()))
}

/// `log_b # P` with the deterministic lexicographic tie-break.
pub fn log_pushforward(s: &SpaceDescriptor, p: &FiniteMeasure, b: &Point) -> Result<TangentMeasure> {
    log_pushforward_with(s, p, b, TieBreak::Lexicographic)
}
