//! Tangent-cone geometry, barycenters and the Lang-Schroeder machinery on
//! concrete Alexandrov spaces with curvature bounded below.
//!
//! The crate is organised bottom-up:
//!
//! * [`spaces`] : the concrete spaces (Euclidean, sphere, hyperbolic, flat
//!   cone, binary products), their distances, geodesics and samplers;
//! * [`tangent`] : tangent cones, logarithm/exponential maps, the inner
//!   product `<u, v>_p` and `Lin_p` membership;
//! * [`measures`] : finite-support measures, empirical measures and
//!   log-pushforwards;
//! * [`barycenter`] : the Fréchet functional, Karcher and grid solvers, and
//!   the exponential-barycenter residual;
//! * [`verify`] : executable checks of the inequalities and constructions
//!   around barycenters, each producing a [`verify::VerificationReport`];
//! * [`cli`] : experiment configs, bundled fixtures and the batch commands.

pub mod barycenter;
pub mod cli;
pub mod error;
pub mod measures;
pub mod rng;
pub mod spaces;
pub mod tangent;
pub mod verify;

pub use error::{GeometryError, SearchFailure, SolveError, VerifyError};

pub use measures::{FiniteMeasure, TangentMeasure};
pub use spaces::{Bounds, Point, SpaceDescriptor};
pub use tangent::{Tangent, TangentVector, TieBreak};
