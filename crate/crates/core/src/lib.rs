//! Sim-to-real robustness workbench for SAR automatic target recognition.
//!
//! - [`scene`]: point-scatterer targets rendered into complex signatures
//!   with shadow masks, and on-disk datasets.
//! - [`domain_rand`]: per-image randomization of resolution, clutter,
//!   thermal noise, bright points and position.
//! - [`nn`]: a small CNN with hand-written gradients, losses, SGD and the
//!   one-cycle schedule.
//! - [`adversarial`]: FGSM under an L2 budget and the PGD-L∞ baseline.
//! - [`pipeline`]: training, bagging, test-time augmentation, evaluation.
//! - [`harness`]: mismatch benchmark, ablation grids, metrics and throughput.

pub mod adversarial;
pub mod domain_rand;
mod error;
pub mod harness;
pub mod nn;
pub mod pipeline;
pub mod scene;
pub mod seed;

pub use error::{Error, Result};
