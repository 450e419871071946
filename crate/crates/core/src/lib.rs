// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod convergence;
pub mod density_mc;
pub mod drift;
pub mod duhamel;
pub mod error;
pub mod euler;
pub mod io;
pub mod kernel_table;
pub mod lemma_checks;
pub mod quad;
pub mod special;
pub mod stable_sampler;
pub mod stable_kernel;

pub use error::{Error, Result};
