//! Movable-antenna array design for multi-target 2D angle-of-arrival sensing.
//!
//! The library covers four layers:
//!
//! * [`model`] - array geometry, spatial angles, steering vectors, and
//!   synthetic snapshot generation;
//! * [`crb`] - the exact multi-target 2D-AoA CRB matrix, its closed-form
//!   lower bounds, equality-condition certificates, and sensitivity
//!   diagnostics;
//! * [`music`] - MUSIC spectrum evaluation, peak extraction, and
//!   assignment-aware MSE scoring;
//! * [`swarm`] - antenna-position optimization of the Monte-Carlo expected
//!   CRB trace via alternating per-antenna swarm-based gradient descent;
//! * [`bench`] - baseline geometries, parameter sweeps, and diagnostic
//!   reports, backed by the CSV/config formats in [`io`].
//!
//! All randomness is routed through seeded, stream-separated generators
//! ([`rng`]); identical seeds reproduce results bit-for-bit.

// Parameter guards use `!(x > 0.0)` deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod crb;
pub mod error;
pub mod grid;
pub mod io;
pub mod model;
pub mod music;
pub mod rng;
pub mod swarm;

pub use error::{Error, Result};
