//! Stationary homogeneous Markov laws of diffusions indexed by the
//! `m`-regular tree with pair interaction `K` and confinement `U`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod config;
pub mod edge_law;
pub mod error;
pub mod fixed_point;
pub mod io;
pub mod local_sim;
pub mod numerics;
pub mod potentials;
pub mod stats;
pub mod tree;

pub use error::{Result, ShmError};
