//! Link-budget and secret-key-rate simulator for satellite-to-ground quantum
//! key distribution over a turbulent atmosphere.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive_optics;
pub mod constants;
pub mod cv;
pub mod dv;
pub mod error;
pub mod link;
pub mod orbit;
pub mod pdte;
pub mod plot;
pub mod scenario;
pub mod special;
pub mod turbulence;

pub use error::{Error, Result};
