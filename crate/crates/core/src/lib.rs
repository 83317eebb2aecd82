//! Geographic-disparity laboratory for transducer speech recognition:
//! a small RNN-T trained with reverse-mode autodiff, an elastic weight
//! consolidation penalty for adaptation, and a WER-difference-maximizing
//! clustering tree over device coordinates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod ewc;
pub mod geo;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod transducer;

mod error;

pub use error::{Error, Result};
pub use model::{FreezeMask, FreezeScheme, ModelConfig, ParamSet, RnntModel};
pub use tensor::Tensor;
