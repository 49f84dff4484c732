//! Information-geometric tools for bounded-rational decisions: distributions
//! on the simplex, Markov kernels, Gibbs policies, the rate-utility trade-off
//! and proportionality of rights restrictions.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod deontic;
pub mod error;
pub mod gibbs;
pub mod kernel;
pub mod matrix;
pub mod rate_utility;
pub mod simplex;

pub use error::{Error, Result};
