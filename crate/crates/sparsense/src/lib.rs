//! File formats, seeded ensembles and the command line for
//! [`sparsense_core`].

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod formats;

pub use error::{Error, Result};
