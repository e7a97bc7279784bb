//! Numerical toolkit for chordal and radial Loewner chains.
//!
//! The crate is organised by subsystem:
//!
//! * [`driver`]: driving functions on capacity-time grids, Dirichlet energy,
//!   concatenation, truncation and the modulus-of-continuity set `H(n)`.
//! * [`chordal`]: slit-map composition in the upper half-plane (forward
//!   transform, mapping-out function, inverse maps, unzipping, capacity).
//! * [`radial`]: reverse-flow traces in the unit disk, the angle process Θ
//!   and the radial/chordal density.
//! * [`bessel`]: Bessel-type SDEs, exact hitting probabilities and the
//!   comparison process `Z`.
//! * [`geometry`]: metrics and predicates on discretized curves.
//! * [`multichordal`]: link patterns and the loop-free part of the
//!   multichordal potential.
//! * [`harness`]: seeded Monte Carlo experiments and run manifests.

// Negated float comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bessel;
pub mod chordal;
pub mod complex;
pub mod driver;
pub mod geometry;
pub mod harness;
pub mod multichordal;
pub mod radial;
pub mod rng;
mod sde;
pub mod trace;

pub use complex::C64;
pub use driver::{Driver, DriverError, EnergyValue, Mode, TightnessConstants, TightnessReport};
pub use trace::{Trace, TraceError};
