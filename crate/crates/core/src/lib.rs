//! Core algorithms for the three-stage multi-photon quantum protocol.
//!
//! Alice and Bob each hold a secret unitary. A bit is sent through three
//! transmissions (Alice applies hers, Bob applies his, Alice undoes hers)
//! and Bob recovers the bit by undoing his own transformation. Because the
//! two secrets commute, neither party ever reveals a key, and every photon
//! in a pulse carries the same secretly rotated state.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO:
//!
//! - [`polarization`]: Jones and Stokes/Mueller calculi, with a bridge between them.
//! - [`groups`]: every commuting transformation family usable by the protocol.
//! - [`protocol`]: the four-step engine, per-block rekeying and transcripts.
//! - [`bench`]: the free-space optical bench (shutters, polarizers, half-wave
//!   plates, detectors), message framing and mechanical timing.
//! - [`adversary`]: intercept-resend, beam-split siphoning, unitary probes and
//!   the Monte Carlo experiment driver.
//! - [`wire`]: the fixed-layout, big-endian frame codec used by networked endpoints.
//!
//! Angles are in degrees in every public interface.
#![no_std]
#![forbid(unsafe_code)]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adversary;
pub mod bench;
pub mod groups;
pub mod linalg;
pub mod polarization;
pub mod protocol;
pub mod pulse;
pub mod seed;
pub mod wire;

mod angle;

pub use angle::{normalize_deg, shortest_arc_deg, sin_cos_deg};
pub use num_complex::Complex64;

/// Tolerance for pure algebra (matrix products, unitarity, inner products).
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Tolerance for anything that passes through trigonometric round trips.
pub const TRIG_TOL: f64 = 1e-9;
