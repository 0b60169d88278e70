//! Differentiable Gaussian splatting on the CPU, with cyclic group training.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: primitive storage, activations, covariance, cameras and PLY IO.
//! - [`render`]: projection, tiled front-to-back compositing and the analytic backward pass.
//! - [`metrics`]: L1/SSIM training loss with gradients, PSNR.
//! - [`optim`]: masked per-primitive Adam.
//! - [`densify`]: adaptive density control restricted to the under-training group.
//! - [`grouping`]: under-training/cached partitions, sampling strategies and the schedule.
//! - [`scene`]: closed-loop synthetic scenes and camera rigs.
//! - [`harness`]: configuration and the training loop.
//! - [`analysis`]: experiment runners producing CSV reports.

pub mod analysis;
pub mod densify;
pub mod error;
pub mod grouping;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod render;
pub mod scene;

pub use error::{Result, SplatError};
pub use model::{Camera, GaussianSet};
