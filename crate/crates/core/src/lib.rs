//! Sparse out-of-sample extension for manifold embeddings.
//!
//! Given training points and their low-dimensional coordinates, this crate
//! fits kernel ridge regression and then replaces its coefficient matrix with
//! a row-sparse one whose predictions on the training set stay within a
//! user-chosen root-mean-squared distance `epsilon` of the full regression.
//! Projecting a new point then only touches the training points whose
//! coefficient row survived (the support vectors).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod embed;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod krr;
pub mod linalg;
pub mod matio;
pub mod metrics;
pub mod model;
pub mod sparse;
pub mod synth;

pub use error::{Error, Result};
pub use kernels::{bind, BoundKernel, KernelSpec, NeighborRule};
pub use krr::{krr_fit, KrrModel};
pub use sparse::{SolveOptions, SparseModel};
