//! Dense matrices and a reverse-mode autodiff tape.

mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{concat_cols, selu, sigmoid, Gradients, Tape, Value, SELU_ALPHA, SELU_LAMBDA};
