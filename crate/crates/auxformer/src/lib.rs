//! Skeleton motion prediction with auxiliary masking and denoising tasks.
//!
//! A mask-aware spatial-temporal attention network is trained jointly on
//! three objectives through a shared backbone: predicting future frames,
//! recovering masked coordinates, and denoising corrupted coordinates. The
//! crate also ships a synthetic motion generator, evaluation and robustness
//! harnesses, and a finite-difference gradient checker that validates the
//! whole training path.

pub mod error;
pub mod eval;
mod fsutil;
pub mod model;
pub mod motion;
pub mod numerics;
pub mod oracle;
pub mod rng;
pub mod synth;
pub mod tasks;

pub use error::{Error, Result};
pub use fsutil::write_atomic;
pub use motion::{MaskMatrix, MotionSequence};
pub use numerics::Tensor;
