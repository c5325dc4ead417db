//! Multi-stage knowledge distillation and prototype-confidence early exit
//! for segment-importance classifiers, with budgeted-summary F1 evaluation.

pub mod cli;
pub mod data;
pub mod distill;
pub mod earlyexit;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
