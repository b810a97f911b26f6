//! Minimizing-movement scheme for inhomogeneous Darcy-law diffusion, solved
//! through its dual optimal-transport formulation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod energy;
pub mod error;
pub mod extended;
pub mod flow;
pub mod grids;
pub mod jko;
pub mod verify;

pub use error::{Error, Result};
