//! Numerical laboratory for the Laplacian with Dirichlet boundary conditions.
//!
//! Spectra come either in closed form (orthotopes) or from P1 finite elements on
//! planar meshes. On top of them sit checks for simple spectrum, linear
//! independence of squared eigenfunctions and non-resonance, first-order
//! eigenvalue derivatives with respect to the boundary and to a potential,
//! relaxed damping placement, and a bilinear Schrödinger controllability precheck.

pub mod damping;
pub mod eigensolver;
pub mod error;
pub mod exact;
pub mod fem;
pub mod geometry;
pub mod perturbation;
pub mod quadrature;
pub mod schrodinger;
pub mod sparse;
pub mod spectral_props;

pub use error::{Error, Result};
