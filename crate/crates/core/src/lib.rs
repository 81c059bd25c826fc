//! Link-level simulator for a monolithic silicon BB84 transmitter with an
//! integrated SiGe light source.
//!
//! The stack runs bottom-up: [`optics`] prepares polarization states,
//! [`link`] attenuates and rotates them, [`detection`] turns them into
//! clicks, [`protocol`] sifts and accounts the key, and [`experiments`]
//! drives the parameter sweeps.

pub mod detection;
pub mod error;
pub mod experiments;
pub mod link;
pub mod optics;
pub mod protocol;
pub mod rng;
pub mod rootfind;
pub mod units;

pub use error::{Error, Result};
