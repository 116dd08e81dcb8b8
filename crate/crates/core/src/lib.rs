#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cli;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod gmm;
pub mod io;
pub mod math;
pub mod policy;
pub mod supervector;
pub mod train;

pub use error::{Error, Result};
