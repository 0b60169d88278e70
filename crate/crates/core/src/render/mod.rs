//! Forward rasterization and its analytic backward pass.
//!
//! Primitives are projected with the EWA approximation, sorted by
//! `(depth, index)`, binned into square tiles and composited front to back per
//! pixel. A primitive is a candidate for a pixel when the pixel lies inside
//! the primitive's 3σ pixel rectangle, so tiling never changes the result.
//!
//! Per-tile work writes into private buffers that are merged in tile order,
//! which keeps the parallel and sequential paths bitwise identical.

mod backward;
pub mod expectation;
pub mod io;
mod project;
mod raster;

pub use backward::{render_backward, GradientBuffer};
pub use expectation::{expected_blend_depth_oracle, expected_grad_magnitude_oracle};
pub use project::{project, Projected2D};
pub use raster::{render_forward, render_forward_masked, RenderOutput};

/// Numerical conventions shared by the forward and backward passes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSettings {
    /// Blending stops once transmittance falls below this value.
    pub t_saturation: f64,
    pub alpha_max: f64,
    /// Contributions with smaller α are skipped entirely.
    pub alpha_min: f64,
    /// Added to the diagonal of every projected covariance (px²).
    pub cov2d_floor: f64,
    pub near_clip: f64,
    pub tile_size: usize,
    pub parallel: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            t_saturation: 1e-4,
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            cov2d_floor: 0.3,
            near_clip: 0.01,
            tile_size: 16,
            parallel: true,
        }
    }
}

/// Linear RGB image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let o = (y * self.width + x) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.data.len() == other.data.len()
    }
}
