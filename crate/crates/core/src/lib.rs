//! Reduced-precision floating-point emulation with call-context placement,
//! manipulated-bit energy accounting, and accuracy/energy tradeoff search.
//!
//! Kernels are written against [`instrument::FpContext`]. Running one under an
//! [`instrument::Instrumented`] context truncates every FLOP of the target
//! width to the mantissa budget that the active [`scope::PlacementRule`]
//! resolves for the current call stack, and tallies what happened so
//! [`energy`] can price it.

pub mod bench;
pub mod energy;
pub mod error;
pub mod explore;
pub mod fpcore;
pub mod instrument;
pub mod report;
pub mod scope;

pub use error::{Error, Result};
