//! Incremental structure-from-motion kernels.
//!
//! The crate is `no_std` (it needs `alloc`): image IO, file formats and
//! threading live in the `sfmkit` companion crate. The modules follow the
//! reconstruction flow:
//!
//! - [`numerics`]: SVD, RQ, rotations and the small matrix types.
//! - [`image`] and [`sift`]: Gaussian scale space and SIFT features.
//! - [`matching`]: ratio-test matching, 8-point fundamental matrix, RANSAC.
//! - [`two_view`]: essential matrix, cheirality, DLT triangulation.
//! - [`resection`]: projection matrix DLT and PnP.
//! - [`bundle`]: Levenberg-Marquardt bundle adjustment.
//! - [`pipeline`]: the incremental driver tying the stages together.
#![no_std]

extern crate alloc;

pub mod bundle;
pub mod image;
pub mod matching;
pub mod numerics;
pub mod pipeline;
pub mod resection;
pub mod sift;
pub mod two_view;

pub use numerics::{Mat, Mat3, Rotation, Vec2, Vec3};
