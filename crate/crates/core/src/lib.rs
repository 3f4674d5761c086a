//! Multiscale beta numbers, density-normalized Jones functions and
//! traveling-salesman curve constructions for discrete measures in `R^n`.

pub mod beta;
pub mod cli;
pub mod curve;
pub mod dyadic;
pub mod error;
pub mod geometry;
pub mod io;
pub mod jones;
pub mod measure;
pub mod nets;
mod optim;
pub mod rectify;

pub use error::{Error, Result};
