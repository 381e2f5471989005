//! Spatial electromagnetic fault-injection (EMFI) mapping toolkit.
//!
//! The crate plans coarse-to-fine probe scans over a target surface, sweeps
//! pulse parameters, drives a [`target::TargetBackend`] (three deterministic
//! simulators ship with the crate), parses the line-oriented instrumentation
//! protocol, classifies every trial into the control-flow / data-corruption /
//! system-level taxonomy and aggregates the results into per-coordinate
//! susceptibility maps with CSV and PGM exporters.
//!
//! A campaign is fully determined by its [`campaign::CampaignConfig`]: every
//! trial draws its randomness from a seed derived statelessly from the
//! campaign seed, so logs are identical for any worker count.

pub mod campaign;
pub mod classify;
pub mod error;
pub mod geometry;
pub mod map;
pub mod protocol;
pub mod pulse;
pub mod rng;
pub mod stats;
pub mod target;

pub use error::{Error, Result};
