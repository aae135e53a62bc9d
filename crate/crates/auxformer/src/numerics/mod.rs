//! Dense-tensor arithmetic with reverse-mode differentiation and a
//! finite-difference gradient checker.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, ScalarFn};
pub use tape::{AttnGroup, Gradients, Tape, Var};
pub use tensor::Tensor;
