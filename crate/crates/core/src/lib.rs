//! Open three-level STIRAP in the generalized Bloch representation.
//!
//! The crate compiles Lindblad master equations into the affine form
//! `dR/dt = M R + b`, analyses the Liouvillian matrix `M` (spectrum, gap,
//! exceptional points, steady states) and integrates the time-dependent
//! three-level dynamics under dephasing and spontaneous emission.

pub mod bloch;
pub mod error;
pub mod experiments;
pub mod liouvillian;
pub mod ode;
pub mod propagator;
pub mod spectral;
pub mod stirap;

pub use bloch::{BlochVector, CMatrix, DensityMatrix, GellMannBasis, Physicality, StructureConstants};
pub use error::{Error, Result};
