//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records ops as they execute; [`Var`] is a cheap handle to a
//! recorded value. Ops are methods on `Var` and return `Result` because
//! shape mismatches and non-finite outputs are errors, never silent.
//!
//! ```
//! use pgan_core::autodiff::Tape;
//! use pgan_core::Tensor;
//!
//! let tape = Tape::<f64>::new();
//! let w = tape.param(Tensor::new(vec![2], vec![0.5, -1.0]).unwrap());
//! let x = tape.constant(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
//! let loss = w.mul(x).unwrap().sum().unwrap();
//! loss.backward().unwrap();
//! assert_eq!(w.grad().unwrap().data(), &[3.0, 4.0]);
//! ```

mod conv;
mod dense;
mod elementwise;
mod gradcheck;
mod norm;
mod reduce;
mod structural;
mod tape;

pub use dense::softmax_rows;
pub use elementwise::{BinaryKind, UnaryKind, LOG_EPS};
pub use gradcheck::{grad_check, grad_check_detailed, GradCheckReport};
pub use norm::INSTANCE_NORM_EPS;
pub use reduce::ReduceKind;
pub use tape::{Function, NodeId, Tape, Var};
