//! Knowledge distillation for medical-style image segmentation.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: a dense f64 tensor with tape-based reverse-mode autodiff,
//!   plus the convolution / pooling / softmax kernels the networks need.
//! - [`nets`]: small configurable encoder-decoder networks that expose named
//!   feature taps.
//! - [`distill`]: prediction-map (PMD), importance-map (IMD) and
//!   region-affinity (RAD) distillation losses, segmentation losses and the
//!   weighted total objective.
//! - [`metrics`]: per-case Dice / VOE / RVD and `a ± b` range aggregation.
//! - [`data`]: synthetic CT-like slices, HU windowing, augmentation, folds and
//!   the binary file formats.
//! - [`harness`]: optimizer, schedule, training/distillation loops,
//!   evaluation and reporting.
//! - [`gradcheck`]: finite-difference checks behind `emkd gradcheck`.
//! - [`oracle`]: slow loop-based re-implementations used to cross-check the
//!   main path.

pub mod data;
pub mod distill;
mod error;
pub mod gradcheck;
pub mod harness;
pub mod kvconf;
pub mod metrics;
pub mod nets;
pub mod oracle;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
