//! Redundant array computation elimination for affine loop nests.
//!
//! The crate parses a small Fortran-flavoured loop language, finds array
//! expressions that recompute values already computed at another iteration,
//! hoists them into auxiliary arrays and contracts those arrays into small
//! rotating buffers or scalars.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod ast;
pub mod binary_detect;
pub mod codegen;
pub mod error;
pub mod frontend;
pub mod identification;
pub mod ir;
pub mod mis;
pub mod nary_detect;
pub mod pipeline;
pub mod rational;

pub use error::{Error, ErrorKind};
pub use pipeline::{optimize, Options, Outcome, Strategy};
