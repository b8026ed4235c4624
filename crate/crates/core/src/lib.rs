//! Principal flows and principal boundaries for labeled point clouds on a
//! Riemannian manifold, with the unit sphere as the shipped geometry.
//!
//! The pipeline is: build a per-sample vector field from local tangent PCA
//! ([`field`]), integrate it into a principal flow for each class
//! ([`flow`]), then trace the equal-margin principal boundary between two
//! flows ([`boundary`]). Points are classified by soft margin and relative
//! gap ([`classify`]); [`svm`] compares the boundary against local
//! maximum-margin separators, and [`sim`] runs the Monte Carlo convergence
//! experiments. [`io`] holds data ingestion, synthetic generators, the
//! parameter sweep, and plot output.

pub mod boundary;
pub mod classify;
pub mod curve;
pub mod error;
pub mod field;
pub mod flow;
pub mod io;
pub mod local;
pub mod manifold;
pub mod par;
pub mod sim;
pub mod svm;

pub use curve::Curve;
pub use error::{Error, Result};
pub use manifold::{Manifold, ManifoldPoint, Sphere, TangentVector, Vec3};
