//! Seedable simulator for terrain-aware UAV deployment: exact building
//! blockage, air-to-ground channel, LoS-probability curves, coverage Monte
//! Carlo, real-time placement search, terrain reconstruction and tracking.

// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod coverage;
pub mod error;
pub mod harness;
pub mod los_model;
pub mod reconstruct;
pub mod rng;
pub mod search;
pub mod terrain;
pub mod tracking;

pub use error::{Error, Result};
