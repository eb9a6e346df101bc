//! Estimation of a static, spatially varying GPS bias field with a team of
//! drones.
//!
//! The pipeline has three stages:
//!
//! 1. [`sbe`] turns relative range/bearing observations and dead-reckoned
//!    motion into *deltas* (bias differences between two GPS readings) and
//!    solves an anchored least-squares problem for the bias at every reading.
//! 2. [`gpr`] regresses those per-reading biases into a continuous map with an
//!    RBF-kernel Gaussian process, one scalar GP per vector component.
//! 3. [`ipp`] uses the GP's predictive variance to place sampling points,
//!    groups them into per-drone routes and assigns routes to drones.
//!
//! [`sim`] provides the kinematic multi-drone simulator with noisy sensing,
//! [`field`] the synthetic ground-truth bias fields, [`metrics`] the RMSE
//! scores and [`harness`] the scenario runner behind the `biasmap` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod field;
pub mod geometry;
pub mod gpr;
pub mod harness;
pub mod ipp;
pub mod metrics;
pub mod sbe;
pub mod sim;
mod spatial;

pub use error::{Error, Result};
pub use geometry::{Bounds, Vec2};
