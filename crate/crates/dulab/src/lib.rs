//! Numerical laboratory for dual-unitary brickwall circuits.
//!
//! * [`gates`]: two-qudit operator algebra and dual-unitary generators.
//! * [`channel`]: the light-cone channel, its spectrum and ergodic class.
//! * [`circuit`]: periodic brickwall evolution, `C_x` operators, entropies.
//! * [`bounds`]: ensemble-averaged purity bounds and their sampling oracle.
//! * [`multipartite`]: state measures and circuit entangling powers.
//! * [`spin`]: transverse-field Ising propagators.

// Comparisons like `!(r <= tol)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod circuit;
pub mod error;
pub mod gates;
pub mod linalg;
pub mod multipartite;
pub mod par;
pub mod rng;
pub mod spin;
pub mod stats;

pub use error::{Error, Result};
pub use faer::c64;
