//! Two-view relative pose estimation for radially distorted cameras.
//!
//! The crate provides:
//! - the one-parameter division undistortion model and epipolar residuals
//!   ([`geometry`]),
//! - minimal and non-minimal fundamental-matrix solvers, including a 9-point
//!   solver that estimates a shared undistortion parameter via a reduced 6x6
//!   polynomial eigenvalue problem ([`solvers`]),
//! - LO-RANSAC with a distortion-sampling strategy, prior injection and
//!   Levenberg-Marquardt local optimization ([`robust`]),
//! - synthetic scenario generation and the pose/intrinsics metric suite
//!   ([`bench`]).

pub mod bench;
pub mod geometry;
pub mod robust;
pub mod solvers;
