//! Knowledge transfer between neural networks through Gaussian-process
//! feature priors.
//!
//! A student network is trained so that the zero-mean GP induced by the
//! dot-product kernel of its hidden features stays close, in KL divergence,
//! to the GP induced by a teacher's features on the same inputs. Because only
//! the batch Gram matrices are compared, teacher and student layers may have
//! different widths.
//!
//! - [`linalg`]: dense matrices, Cholesky, log-determinant, SPD solves.
//! - [`nn`]: dense networks, autodiff tape, losses, optimizers, `FPNN` files.
//! - [`prior`]: Gram kernels, GP KL divergence and its feature gradient,
//!   soft-target and L2 baselines.
//! - [`data`]: IDX/CSV loaders, synthetic generators, splits, feature caches.
//! - [`train`]: teacher training, two-phase and joint distillation,
//!   multi-level priors, combining experts, metrics, method comparison.
//! - [`cli`]: JSON experiment configs and the `gpkt` subcommands.

pub mod cli;
pub mod data;
pub mod error;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod prior;
pub mod train;

pub use error::{Error, Result};
pub use linalg::Matrix;
