//! Numerical laboratory for long-range quasi-periodic operators
//! `H(θ) = εW_φ + v(θ + n·ω)δ_{n,n'}` on finite boxes of `Z^d`.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] builds the operator family and its finite-volume restrictions;
//! * [`lattice`] holds boxes, half-lattice points and the geometric inequalities;
//! * [`greens`] solves Green's functions and checks the matrix estimates;
//! * [`msa`] runs the multi-scale resonance analysis on a desk-scale schedule;
//! * [`dynamics`] evolves wave packets and compares moments with Green's functions.

pub mod dynamics;
pub mod greens;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod msa;

pub use lattice::{HalfPoint, LatticeBox, Site, SiteSet};
pub use linalg::{CMat, C64};
pub use model::ModelSpec;
