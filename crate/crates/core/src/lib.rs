//! Time-fractional abstract diffusion D_t^a u + A^b u = f(t, u) on spectrally
//! truncated operators: forward and backward solvers, stability experiments
//! and the special functions they rest on.

pub mod cli;
pub mod error;
pub mod ffvp;
pub mod fivp;
pub mod mlf;
pub mod regularize;
pub mod kernels;
pub mod spectrum;

pub use error::{FdError, Result};
