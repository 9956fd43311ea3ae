//! Degeneracy and bifurcation analysis for the constant scalar curvature
//! equation along the canonical variation of a Riemannian submersion with
//! totally geodesic fibers.
//!
//! * [`spectra`]: exact Laplace spectra of model manifolds and products.
//! * [`variation`]: scalar curvature of `g(t)`, degeneracy instants, Morse
//!   indices and bifurcation certificates.
//! * [`galerkin`]: spectral discretization of the equation on products.
//! * [`continuation`]: Newton solves, branch points, branch switching,
//!   pseudo-arclength continuation and the finite-dimensional reduction.

pub mod error;
pub mod exact;
pub mod continuation;
pub mod galerkin;
pub mod spectra;
pub mod variation;

pub use error::{Error, Result};
pub use exact::{QuadraticSurd, Rational};
