//! Backscatter-assisted cooperation in a two-user wireless-powered network.
//!
//! A hybrid access point powers a far device and a near relay. The far device
//! can backscatter the energy carrier to the relay, transmit actively, and be
//! forwarded. The crate evaluates the resulting rates, maximises the common
//! (max-min) throughput with a dual decomposition solver, cross-checks it with
//! an interior-point reference, and drives the parameter sweeps.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dual_solver;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod phy;
pub mod rates;
pub mod sysmodel;

pub use error::{Error, Result};
