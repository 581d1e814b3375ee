// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over 3x3 constant matrices read closer to the formulas.
#![allow(clippy::needless_range_loop)]

pub mod bands;
pub mod cli;
pub mod density;
pub mod diagnostics;
pub mod eigenfield;
pub mod error;
pub mod flow;
pub mod kernel;
pub mod mc;
pub mod quadrature;
pub mod ridge;

pub use error::{FilamentError, Result};
