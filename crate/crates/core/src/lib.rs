//! Local Nahm/ADHM transform of anti-self-dual gauge fields on the Euclidean 4-ball.
//!
//! Coupled Dirac fields are discretized as weighted polynomial spinors, the
//! Bergmann space is the numerical null space of the Dirac quadratic form, and
//! everything else (ADHM matrices, inverse transform, oscillator spectrum, index)
//! is built from L² pairings inside that space.

pub mod ansatz;
pub mod bergmann;
pub mod clifford;
pub mod config;
pub mod diracop;
pub mod error;
pub mod family;
pub mod gauge;
pub mod index;
pub mod linalg;
pub mod nahm;
pub mod poly;
pub mod quad;

pub use error::{NahmError, Result};
pub use gauge::{FieldSpec, GaugeField, Point4};
pub use linalg::{c64, CMat, RMat};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
