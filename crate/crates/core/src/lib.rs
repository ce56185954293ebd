//! Virtual machine consolidation: the MILP model, an LP/branch-and-bound
//! solver stack, kernel search heuristics, an instance generator and a
//! benchmark harness.

// `!(x > 0.0)` rejects NaN; index loops mirror the algebra
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod error;
pub mod generator;
pub mod kernel;
pub mod lp;
pub mod mip;
pub mod model;

pub use error::{Error, Result};
