//! Small dense reverse-mode autodiff engine with an Adam optimizer.

pub mod checkpoint;
mod matrix;
mod params;
mod tape;

pub use matrix::Matrix;
pub use params::{Adam, Param, ParamSet};
pub use tape::{Tape, Var, MASK_VALUE};
