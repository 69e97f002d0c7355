//! Simulation and analysis toolkit for a spatio-temporally multiplexed
//! atomic frequency comb memory array.
//!
//! The crate is organised along the life of an experiment:
//!
//! - [`device`]: per-cell efficiencies and the storage configuration.
//! - [`sequence`]: compiles a storage plan into deflector events and
//!   checks switching and collision constraints.
//! - [`simulator`]: seeded Poisson photon-counting trials, including
//!   cross-talk scans.
//! - [`analysis`]: per-mode statistics, cumulative series, network
//!   projections and cross-talk matrices.
//! - [`config`], [`export`], [`manifest`] and [`cli`]: file formats and the
//!   `qmem` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod device;
pub mod error;
pub mod export;
pub mod manifest;
pub mod sequence;
pub mod simulator;

pub use error::{Error, Result};
