#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod gauss;
mod par;

pub mod cli;
pub mod error;
pub mod fracquad;
pub mod gronwall;
pub mod monotone;
pub mod operators;
pub mod specialfn;

pub use error::{Error, Result};
