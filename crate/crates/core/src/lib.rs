//! Recovery of the common subspace on which several distributions share their
//! first two cumulants.
//!
//! The algebraic estimators turn whitened epoch statistics into quadratic and
//! linear forms that vanish on the subspace ([`cumulants`]) and extract linear
//! generators from them, either exactly by elimination ([`exact`]) or in the
//! least-squares sense with truncated SVDs ([`approx`]). [`ssa`] provides an
//! optimization baseline, and [`bench`] compares the two on synthetic data
//! from [`synthgen`].

pub mod approx;
pub mod bench;
pub mod cumulants;
pub mod error;
pub mod exact;
pub mod formats;
pub mod linalg;
pub mod pipeline;
pub mod polyspace;
pub mod ssa;
pub mod subspace;
pub mod synthgen;

pub use cumulants::{EpochCumulants, PolynomialSystem, Reference, SystemMode};
pub use error::{Error, Result};
pub use pipeline::{solve, Method, SolveOptions, Solution};
pub use polyspace::{LinearForm, QuadraticForm};
pub use subspace::SubspaceEstimate;
