//! Simulation and control core for multihop entanglement-distribution networks.
//!
//! The crate is `no_std` and only needs `alloc`. Everything in here is a pure
//! function over value types or an explicitly seeded generator; file formats,
//! the scenario runner and the command line live in the `mhqn` crate.
//!
//! Module map:
//!
//! - [`grid`]: 25 GHz flex-grid slots, conjugate signal/idler pairs, allocation plans.
//! - [`topology`]: switched optical topology, device states and lightpath resolution.
//! - [`photonics`]: pair brightness, detector response, coincidence and noise model.
//! - [`timetag`]: timestamp streams, delay calibration and coincidence counting.
//! - [`tomography`]: two-qubit states, 36-setting measurement model, Bayesian estimation.
//! - [`control`]: threshold monitoring, failure diagnosis and protection switching.
//! - [`network`]: glue that evaluates rates for a topology, state and allocation.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod control;
pub mod grid;
mod ids;
pub mod linalg;
pub(crate) mod math;
pub mod network;
pub mod photonics;
pub mod rng;
pub mod timetag;
pub mod tomography;
pub mod topology;

pub use ids::{DeviceId, SpanId, UserId};
