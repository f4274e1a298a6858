//! Dense tensors with reverse-mode differentiation and the Adam optimizer.
//!
//! A [`Tape`] is rebuilt for every training step. Parameters are borrowed by
//! the tape, gradients come back as owned tensors, and [`adam_step`] applies
//! them once the tape has been dropped.

mod adam;
pub mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use tape::{Activation, CustomOp, Gradients, Tape, Var, EXP_CLAMP};
pub use tensor::{Real, Tensor};
