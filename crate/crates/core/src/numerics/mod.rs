//! Dense-matrix reverse-mode AD, the Adam optimizer and gradient checking.

mod adam;
mod gradcheck;
pub mod math;
mod matrix;
mod tape;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheck, RELATIVE_FLOOR};
pub use matrix::{CsrMatrix, Matrix};
pub use tape::{Tape, Var};
