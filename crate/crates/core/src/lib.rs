//! Dense pointcloud-sequence reconstruction from per-frame depth, optical flow and
//! confidence masks.
//!
//! Camera poses are not predicted directly: each adjacent frame pair is aligned in
//! closed form by weighted Procrustes over flow-induced 3D correspondences, and the
//! pairwise results are chained. On top of that sit the self-supervised consistency
//! losses, a per-scene refinement loop, sliding-window stitching for long videos, the
//! evaluation metrics, and an analytic synthetic scene used as ground truth.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the command line
//! live in the `mono4d` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod align;
pub mod camera;
pub mod cloud;
pub mod corr;
mod error;
pub mod eval;
pub mod inputs;
pub mod loss;
pub mod pipeline;
pub mod pose;
pub mod raster;
pub mod refine;
mod sum;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use camera::CameraIntrinsics;
pub use cloud::{assemble_global, transform, unproject, CloudSequence, DepthMap, FrameCloud};
pub use error::{Degeneracy, Error, Result};
pub use inputs::SceneInputs;
pub use pose::{PoseSE3, SimTransform};
pub use raster::Grid;
pub use sum::CompensatedSum;

/// 3-vector used for points and translations (meters).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3×3 matrix used for rotations, covariances and intrinsics.
pub type Mat3 = nalgebra::Matrix3<f64>;
