//! Sparse sensor placement and full-state reconstruction from point
//! measurements.
//!
//! The crate is `no_std` (with `alloc`) and holds the numerical pieces:
//!
//! - [`snapshots`]: snapshot matrices, masking, centering, splits, noise and
//!   synthetic generators.
//! - [`lowrank`]: truncated POD bases and linear gappy-POD reconstruction.
//! - [`placement`]: column-pivoted QR sensor selection, a random baseline and
//!   the sensing operator.
//! - [`sdn`]: shallow decoder networks with exact gradients, ADAM training,
//!   early stopping and iterative input pruning.
//! - [`bench`]: the four reconstruction pipelines and the relative error
//!   metric used to compare them.
//!
//! File formats, ensembles with wall-clock timing and the command line live
//! in the companion `sparsense` crate. Enable the `std` feature for runtime
//! SIMD dispatch in the matrix kernels.
#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod bench;
pub mod error;
pub mod linalg;
pub mod lowrank;
pub mod placement;
pub mod rng;
pub mod sdn;
pub mod snapshots;

mod math;

pub use error::{Error, Result};
pub use linalg::Matrix;
