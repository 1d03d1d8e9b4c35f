//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records a fixed vocabulary of operators (matmul, broadcast add,
//! scaling, column concat/slice, relu, silu, layer norm, mean squared error,
//! fixed row selection and fixed sparse matmul) together with the values
//! their adjoints need. Ops never mutate recorded values.

mod gradcheck;
mod params;
mod tape;

pub use gradcheck::grad_check;
pub use params::{BoundParams, Gradients, ParameterStore};
pub use tape::{Adjoints, RowMap, Tape, Tensor, LAYER_NORM_EPS};
