//! Numerical laboratory for sharpness experiments around wave-packet
//! decoupling on the truncated paraboloid.
//!
//! The crate builds a frequency-lattice Schrödinger-type field, cuts it into
//! caps and tubes, and measures both sides of decoupling-style inequalities
//! across a sweep of scales, fitting growth exponents against closed-form
//! predictions.  Everything downstream of a seed is deterministic, so runs
//! are reproducible and cacheable by config hash.

pub mod cache;
pub mod config;
pub mod eval;
pub mod experiments;
pub mod geometry;
pub mod norms;
pub mod parallel;
pub mod params;
pub mod quadrature;
pub mod record;
pub mod wavepacket;

mod error;

pub use error::{Error, Result};
pub use params::Params;
