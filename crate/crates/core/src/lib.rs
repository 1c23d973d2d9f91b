//! Nonsmooth first-order calculus at desk scale (dimensions 1 to 3).

// `!(x > 0.0)` is how NaN gets rejected alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod funcspace;
pub mod linalg;
pub mod maxop;
pub mod minimax;
pub mod nonsmooth;
pub mod semilinear;
pub mod specials;
pub mod tangency;
pub mod verify;

pub use error::{Error, Result};
pub use funcspace::{BoxDomain, DirectionalFunction, GridFunction};
