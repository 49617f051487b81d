//! Minimal dense-tensor numerics with reverse-mode differentiation.
//!
//! A [`Tape`] records primitive applications during the forward pass;
//! [`Tape::backward`] replays them in reverse to accumulate gradients.
//! Everything is `f64`. Every op validates finiteness of its output; a
//! NaN/Inf is a hard failure surfaced as a [`NumericFailure`] panic payload
//! so the harness can map it to a diagnostic.

mod check;
mod convmath;
mod tape;
mod tensor;

pub use check::check_gradients;
pub use convmath::{col2im, conv2d_oracle, im2col};
pub use tape::{Grads, NumericFailure, Tape, Var};
pub use tensor::Tensor;
