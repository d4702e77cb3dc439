#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Simulation, conditional-Gaussian filtering and smoothing, and hidden-state
//! diagnostics for extreme events in partially observed stochastic systems.

pub mod assimilate;
pub mod clusterkit;
pub mod error;
pub mod eventstats;
pub mod infodiag;
pub mod io;
pub mod linalg;
pub mod models;
pub mod pathways;
pub mod pipeline;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
