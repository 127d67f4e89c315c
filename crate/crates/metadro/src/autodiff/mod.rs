//! Dense tensors and tape-based reverse-mode differentiation.

mod tape;
mod tensor;

pub use tape::{Parameter, Tape, Var};
pub use tensor::{stack_rows, Tensor};
