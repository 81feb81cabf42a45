//! Dense `f64` tensors, taped reverse-mode differentiation and SGD.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{central_difference, relative_error, DEFAULT_STEP, GroupError, REL_ERROR_FLOOR};
pub use params::{sgd_step, ParamId, ParamStore, Parameter};
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::{matmul, matmul_at, matmul_bt, relu, softmax, Tensor};
