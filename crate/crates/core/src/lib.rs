//! Operator-valued frames of representations on the real Heisenberg group `H_n`.
//!
//! Integrals are Lebesgue unless stated otherwise; the Haar measure that gives
//! the quotient by the lattice total mass one is [`group::HAAR_SCALE`] times
//! Lebesgue measure.

pub mod baseline;
pub mod cli;
pub mod error;
pub mod frames;
pub mod grid;
pub mod group;
pub mod numfmt;
pub mod representations;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
