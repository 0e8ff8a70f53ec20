//! Bounds on the prices of two-asset exotic options that are consistent with
//! vanilla option quotes on both assets and with a causal dependence between
//! the two price processes.
//!
//! The crate builds discrete multi-marginal martingale transport problems on
//! finite support grids and solves them in three ways:
//!
//! * [`mot`]: the plain linear relaxation (martingale + marginal constraints),
//! * [`mccormick`]: the same LP tightened with McCormick envelopes of the
//!   bilinear causality and anticausality identities,
//! * [`bnb`]: spatial branch-and-bound on those envelopes, which closes the gap
//!   to the exact bicausal bound.
//!
//! [`calibration`] turns bid/ask quotes into marginal laws, and [`report`]
//! collects bound-ratio statistics over many instances.

pub mod bnb;
pub mod calibration;
pub mod coupling;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod lp;
pub mod marginals;
pub mod mccormick;
pub mod mot;
pub mod payoffs;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
