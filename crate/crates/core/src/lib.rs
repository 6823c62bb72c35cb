//! Cavity-method solver for the ferromagnetic Ising model on random trees
//! and locally tree-like random graphs.

pub mod cavity;
pub mod cli;
pub mod criticality;
pub mod degree_models;
pub mod error;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
