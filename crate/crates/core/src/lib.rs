//! Discrete-event simulator for a heralded single-photon B92 key distribution
//! link, from the down-conversion source to key-rate analysis.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod detection;
pub mod error;
pub mod photonics;
pub mod protocol;
pub mod report;
pub mod spdc;
pub mod histogram;
pub mod io;
pub mod rng;
pub mod timetag;

pub use error::{Error, Result};
