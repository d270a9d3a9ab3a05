//! Dense tensors with reverse-mode automatic differentiation.

mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{finite_diff_check, finite_diff_check_with, relative_error, GradCheck, Stencil};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
