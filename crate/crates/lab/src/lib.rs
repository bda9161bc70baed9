//! Toy environments for severity-aware training.
//!
//! * [`seg`] generates synthetic labelled scenes and trains a small softmax
//!   segmenter with cross-entropy, one-hot Wasserstein or Sinkhorn losses.
//! * [`drive`] is a lane-following world that renders front views in the
//!   segmentation format and scores each step with an infraction reward.
//! * [`agent`] is an advantage actor-critic driving from segmenter latents,
//!   and the loop that alternates agent training with ground-matrix updates.

pub mod agent;
pub mod drive;
pub mod error;
pub mod io;
pub mod rng;
pub mod seg;

pub use error::{Error, Result};
