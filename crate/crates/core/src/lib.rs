//! Category-level 6D pose estimation on synthetic scenes: topology-aware
//! surface priors, hybrid receptive-field graph fusion, and a decoupled
//! rotation / residual translation-size head.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, configuration
//! and the command-line tool live in the `thepose` companion crate.
//!
//! Module map:
//!
//! - [`geometry`]: SE(3) math, camera back-projection, point sampling,
//!   positional encoding, rotation assembly and comparison.
//! - [`tensor`]: a small dense tensor engine with a reverse-mode tape,
//!   finite-difference checks and an Adam optimizer with a cosine tail.
//! - [`synth`]: procedural category shapes, the analytic surface prior,
//!   z-buffer rendering into [`synth::SceneSample`]s and pixel occlusion.
//! - [`net`]: prior refinement, global context pooling, hybrid receptive
//!   fields and the graph fusion stream.
//! - [`head`]: pose/size regression, losses and the training loop.
//! - [`metrics`]: oriented-box IoU, symmetry-aware pose errors and reports.
#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

mod error;
pub mod geometry;
pub mod head;
pub mod math;
pub mod metrics;
pub mod net;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
