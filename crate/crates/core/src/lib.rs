//! Numerical laboratory for ground states of competitive elliptic systems.
//!
//! The crate discretizes Dirichlet problems on intervals, rectangles, disks
//! and annuli, minimizes the system energy over the discrete Nehari set via
//! scaling projection, and provides polarization / symmetry diagnostics and
//! a mass-constrained variant.

pub mod config;
pub mod energy;
pub mod error;
pub mod grid;
pub mod mass;
pub mod model;
pub mod polarize;
pub mod run;
pub mod solver;

pub use error::{Error, Result};
