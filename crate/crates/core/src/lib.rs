//! Sparse support recovery with threshold-stopped orthogonal matching
//! pursuit.
//!
//! - [`linalg`]: dense kernels and the incremental projection engine
//! - [`model`]: seeded Gaussian measurement instances
//! - [`threshold`]: measurement scaling laws and the stopping threshold plan
//! - [`omp`]: thresholded OMP, the genie variant and its failure events
//! - [`lasso`]: coordinate-descent lasso baseline
//! - [`brownian`]: normalized Brownian motion and tail-bound checks
//! - [`harness`]: Monte Carlo sweeps and CSV reports
//! - [`cli`]: the command-line front end

// `!(x > t)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod cli;
pub mod exec;
pub mod harness;
pub mod lasso;
pub mod linalg;
pub mod model;
pub mod omp;
pub mod threshold;

pub use exec::Execution;
