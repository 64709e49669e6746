//! Exact computation and Monte Carlo for stationary random fields on the
//! two-dimensional lattice.

pub mod conditions;
pub mod config;
pub mod decomposition;
pub mod error;
pub mod field;
pub mod form;
pub mod noise;
pub mod output;
pub mod rng;
pub mod runner;
pub mod special;
pub mod stats;
pub mod svg;
pub mod summation;
pub mod tower;
pub mod weights;

pub use error::{Error, Result};
