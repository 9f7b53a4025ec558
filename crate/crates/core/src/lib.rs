//! Single-view RGB-D scene completion.
//!
//! Given one registered color + depth frame, the pipeline renders the scene
//! from rotated viewpoints, masks the regions that need hallucinating,
//! inpaints them through a pluggable image backend, lifts each inpainted view
//! back to depth with a normal-guided least-squares solve, and fuses the
//! views under a cross-view consistency rule into one colored point cloud.
//!
//! Stages:
//!
//! 1. [`geometry`] – pinhole camera, poses, deprojection and z-buffered projection.
//! 2. [`masking`] – occupancy frustum mesh and the surface-aware inpainting mask.
//! 3. [`inpaint`] – small-hole filling, prompts, inpainting backends and caching.
//! 4. [`view_select`] – viewpoints on the viewing sphere by target context ratio.
//! 5. [`depth`] – normal/boundary estimation and depth completion.
//! 6. [`fusion`] – cross-view consistency filtering.
//! 7. [`metrics`] – Chamfer distance, voxel IoU and F-Score.
//! 8. [`pipeline`] – end-to-end orchestration, with [`io`], [`config`] and [`fixture`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod depth;
pub mod error;
pub mod fixture;
pub mod fusion;
pub mod geometry;
pub mod grid;
pub mod inpaint;
pub mod io;
pub mod masking;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod view_select;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, ColoredPointCloud, PartialView, Pose, RgbdFrame};
pub use grid::{ColorImage, DepthMap, Grid, Mask, Rgb};
