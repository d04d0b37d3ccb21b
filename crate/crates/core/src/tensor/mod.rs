//! Dense 2-D tensors with a reverse-mode tape.
//!
//! Every value on the tape is an `Array2`; scalars are `1 × 1` and row
//! vectors (biases, norm scales) are `1 × m`. The op vocabulary is exactly
//! what the graph Transformer encoder needs.

mod adam;
mod params;
mod tape;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use params::{Bound, ParamStore};
pub use tape::{Additive, Gradients, ScoreOffset, Tape, Var, LAYER_NORM_EPS};

/// Floating-point element type usable on the tape (`f32` or `f64`).
pub trait Scalar:
    Float
    + LinalgScalar
    + ScalarOperand
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("row {row} of the attention scores has no attendable entry")]
    AllMaskedRow { row: usize },
    #[error("backward needs a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("cross-entropy over an empty id set")]
    EmptyMask,
    #[error("target {target} of row {row} is not below the class count {classes}")]
    TargetOutOfRange { row: usize, target: usize, classes: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}
