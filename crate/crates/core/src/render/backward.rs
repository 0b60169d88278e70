use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;

use super::project::{geometry, Projected2D};
use super::raster::{RenderOutput, TileBins, TileSplats};
use super::{Image, RenderSettings};
use crate::error::{Result, SplatError};
use crate::model::{normalize_quat, quat_matrix_vjp, quat_to_matrix, sigmoid, Camera, GaussianSet};

/// Per-primitive gradients of a scalar loss. Rows of primitives that were not
/// rendered are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    /// `(∂L/∂x_m, ∂L/∂y_m)` in pixel units, summed over the view's pixels.
    pub d_means2d: Vec<[f64; 2]>,
    /// `∂L/∂Σ'` as symmetric-matrix entries `(xx, xy, yy)`.
    pub d_cov2d: Vec<[f64; 3]>,
    /// With respect to the opacity logit.
    pub d_opacity: Vec<f64>,
    pub d_color: Vec<[f64; 3]>,
    pub d_mean3d: Vec<[f64; 3]>,
    pub d_log_scale: Vec<[f64; 3]>,
    /// With respect to the raw (unnormalized) quaternion.
    pub d_rotation: Vec<[f64; 4]>,
}

impl GradientBuffer {
    pub fn zeros(n: usize) -> Self {
        Self {
            d_means2d: vec![[0.0; 2]; n],
            d_cov2d: vec![[0.0; 3]; n],
            d_opacity: vec![0.0; n],
            d_color: vec![[0.0; 3]; n],
            d_mean3d: vec![[0.0; 3]; n],
            d_log_scale: vec![[0.0; 3]; n],
            d_rotation: vec![[0.0; 4]; n],
        }
    }

    pub fn len(&self) -> usize {
        self.d_opacity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_opacity.is_empty()
    }

    /// True when every parameter gradient of row `i` is exactly zero.
    pub fn row_is_zero(&self, i: usize) -> bool {
        self.d_means2d[i] == [0.0; 2]
            && self.d_opacity[i] == 0.0
            && self.d_color[i] == [0.0; 3]
            && self.d_mean3d[i] == [0.0; 3]
            && self.d_log_scale[i] == [0.0; 3]
            && self.d_rotation[i] == [0.0; 4]
    }

    pub fn all_finite(&self) -> bool {
        let f = |v: &[f64]| v.iter().all(|x| x.is_finite());
        self.d_means2d.iter().all(|r| f(r))
            && self.d_cov2d.iter().all(|r| f(r))
            && f(&self.d_opacity)
            && self.d_color.iter().all(|r| f(r))
            && self.d_mean3d.iter().all(|r| f(r))
            && self.d_log_scale.iter().all(|r| f(r))
            && self.d_rotation.iter().all(|r| f(r))
    }
}

/// Screen-space gradients of one projected primitive, accumulated over pixels.
#[derive(Clone, Copy, Default)]
struct ScreenGrad {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl ScreenGrad {
    fn add(&mut self, o: &ScreenGrad) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

struct Entry {
    k: usize,
    alpha: f64,
    g: f64,
    t: f64,
    clamped: bool,
}

fn backward_tile(
    bins: &TileBins,
    tile: usize,
    projected: &[Projected2D],
    out: &RenderOutput,
    d_image: &Image,
) -> Vec<ScreenGrad> {
    let settings = &out.settings;
    let list = &bins.lists[tile];
    let splats = TileSplats::gather(projected, list, settings);
    let mut grads = vec![ScreenGrad::default(); splats.len()];
    let (w, h) = (d_image.width, d_image.height);
    let [x0, y0, x1, y1] = bins.tile_rect(tile, w, h);
    let mut entries: Vec<Entry> = Vec::new();
    let mut row = Vec::with_capacity(splats.len());
    for y in y0..y1 {
        splats.row_candidates(y, &mut row);
        for x in x0..x1 {
            let d_c = d_image.pixel(x, y);
            if d_c == [0.0; 3] {
                continue;
            }
            // replay the forward blend for this pixel
            entries.clear();
            let mut t = 1.0f64;
            for &k in &row {
                let Some((alpha, g, clamped)) = splats.alpha_at(k, x, y, settings) else { continue };
                entries.push(Entry { k, alpha, g, t, clamped });
                t *= 1.0 - alpha;
                if t < settings.t_saturation {
                    break;
                }
            }
            // suffix sum of everything composited behind the current entry
            let mut behind = [t * out.background[0], t * out.background[1], t * out.background[2]];
            for e in entries.iter().rev() {
                let col = splats.color[e.k];
                let gk = &mut grads[e.k];
                let w_k = e.alpha * e.t;
                let mut d_alpha = 0.0;
                for ch in 0..3 {
                    gk.color[ch] += d_c[ch] * w_k;
                    d_alpha += d_c[ch] * (e.t * col[ch] - behind[ch] / (1.0 - e.alpha));
                    behind[ch] += col[ch] * w_k;
                }
                if e.clamped {
                    continue;
                }
                let opacity = splats.opacity[e.k];
                gk.opacity += d_alpha * e.g;
                let d_power = d_alpha * opacity * e.g;
                let dx = splats.mean[e.k][0] - (x as f64 + 0.5);
                let dy = splats.mean[e.k][1] - (y as f64 + 0.5);
                let [a, b, c] = splats.conic[e.k];
                gk.mean[0] -= d_power * (a * dx + b * dy);
                gk.mean[1] -= d_power * (c * dy + b * dx);
                gk.conic[0] -= 0.5 * d_power * dx * dx;
                gk.conic[1] -= d_power * dx * dy;
                gk.conic[2] -= 0.5 * d_power * dy * dy;
            }
        }
    }
    grads
}

struct PrimitiveGrad {
    d_cov2d: [f64; 3],
    d_mean3d: [f64; 3],
    d_log_scale: [f64; 3],
    d_rotation: [f64; 4],
    d_logit: f64,
}

/// Chains screen-space gradients of primitive `i` back to its raw parameters.
fn chain_to_parameters(
    set: &GaussianSet,
    cam: &Camera,
    settings: &RenderSettings,
    p: &Projected2D,
    sg: &ScreenGrad,
) -> Result<PrimitiveGrad> {
    let i = p.gaussian_index;
    let geo = geometry(set, cam, i, settings.cov2d_floor)?;
    let conic = Matrix2::new(p.conic[0], p.conic[1], p.conic[1], p.conic[2]);
    // the off-diagonal conic entry appears twice in the quadratic form
    let d_conic = Matrix2::new(sg.conic[0], 0.5 * sg.conic[1], 0.5 * sg.conic[1], sg.conic[2]);
    let d_cov2d = -(conic * d_conic * conic);

    let jw = geo.jw;
    let d_sigma = jw.transpose() * d_cov2d * jw;
    let d_jw = 2.0 * d_cov2d * jw * geo.sigma;
    let d_j = d_jw * cam.rotation.transpose();

    let t = geo.t;
    let (fx, fy) = (cam.fx, cam.fy);
    let iz = 1.0 / t.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut d_t = Vector3::zeros();
    // J = [[fx/z, 0, -fx x/z²], [0, fy/z, -fy y/z²]]
    d_t.x += d_j[(0, 2)] * (-fx * iz2);
    d_t.y += d_j[(1, 2)] * (-fy * iz2);
    d_t.z += d_j[(0, 0)] * (-fx * iz2)
        + d_j[(0, 2)] * (2.0 * fx * t.x * iz3)
        + d_j[(1, 1)] * (-fy * iz2)
        + d_j[(1, 2)] * (2.0 * fy * t.y * iz3);
    // u = fx x/z + cx, v = fy y/z + cy
    let [du, dv] = sg.mean;
    d_t.x += du * fx * iz;
    d_t.y += dv * fy * iz;
    d_t.z += -du * fx * t.x * iz2 - dv * fy * t.y * iz2;
    let d_mean3d = cam.rotation.transpose() * d_t;

    // Σ = M Mᵀ with M = R S
    let q_raw = set.rotations[i];
    let q = normalize_quat(&q_raw).ok_or(SplatError::NonFinite { what: "rotation norm", index: i })?;
    let r = quat_to_matrix(&q);
    let ls = set.log_scales[i];
    let s = [ls[0].exp(), ls[1].exp(), ls[2].exp()];
    let m = r * Matrix3::from_diagonal(&Vector3::from(s));
    let d_m = 2.0 * d_sigma * m;
    let mut d_r = Matrix3::zeros();
    let mut d_log_scale = [0.0; 3];
    for j in 0..3 {
        let mut d_s = 0.0;
        for row in 0..3 {
            d_r[(row, j)] = d_m[(row, j)] * s[j];
            d_s += d_m[(row, j)] * r[(row, j)];
        }
        d_log_scale[j] = d_s * s[j];
    }
    let d_qn = quat_matrix_vjp(&q, &d_r);
    let norm = (q_raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let dot: f64 = (0..4).map(|k| q[k] * d_qn[k]).sum();
    let d_rotation = [0, 1, 2, 3].map(|k| (d_qn[k] - q[k] * dot) / norm);

    let o = sigmoid(set.opacity_logits[i]);
    Ok(PrimitiveGrad {
        d_cov2d: [d_cov2d[(0, 0)], d_cov2d[(0, 1)], d_cov2d[(1, 1)]],
        d_mean3d: [d_mean3d.x, d_mean3d.y, d_mean3d.z],
        d_log_scale,
        d_rotation,
        d_logit: sg.opacity * o * (1.0 - o),
    })
}

/// Gradients of a scalar loss whose derivative w.r.t. the rendered image is
/// `d_image`, for the forward pass `output` of `set` seen from `cam`.
pub fn render_backward(
    set: &GaussianSet,
    cam: &Camera,
    output: &RenderOutput,
    d_image: &Image,
) -> Result<GradientBuffer> {
    if d_image.width != cam.width || d_image.height != cam.height || !d_image.same_shape(&output.image) {
        return Err(SplatError::Dimension(format!(
            "d_image is {}x{}, render is {}x{}",
            d_image.width, d_image.height, output.image.width, output.image.height
        )));
    }
    if output.gaussian_count() != set.len() {
        return Err(SplatError::Dimension(format!(
            "render output covers {} primitives, set has {}",
            output.gaussian_count(),
            set.len()
        )));
    }
    let bins = &output.bins;
    let projected = &output.projected;
    let n_tiles = bins.lists.len();
    let run = |tile: usize| backward_tile(bins, tile, projected, output, d_image);
    let tiles: Vec<Vec<ScreenGrad>> = if output.settings.parallel {
        (0..n_tiles).into_par_iter().map(run).collect()
    } else {
        (0..n_tiles).map(run).collect()
    };

    let mut screen = vec![ScreenGrad::default(); projected.len()];
    for (tile, grads) in tiles.iter().enumerate() {
        for (k, &pk) in bins.lists[tile].iter().enumerate() {
            screen[pk as usize].add(&grads[k]);
        }
    }

    let settings = output.settings;
    let chain = |k: usize| chain_to_parameters(set, cam, &settings, &projected[k], &screen[k]);
    let per_prim: Vec<Result<PrimitiveGrad>> = if settings.parallel {
        (0..projected.len()).into_par_iter().map(chain).collect()
    } else {
        (0..projected.len()).map(chain).collect()
    };

    let mut buf = GradientBuffer::zeros(set.len());
    for (k, pg) in per_prim.into_iter().enumerate() {
        let pg = pg?;
        let i = projected[k].gaussian_index;
        buf.d_means2d[i] = screen[k].mean;
        buf.d_color[i] = screen[k].color;
        buf.d_cov2d[i] = pg.d_cov2d;
        buf.d_mean3d[i] = pg.d_mean3d;
        buf.d_log_scale[i] = pg.d_log_scale;
        buf.d_rotation[i] = pg.d_rotation;
        buf.d_opacity[i] = pg.d_logit;
    }
    Ok(buf)
}
