use nalgebra::{Matrix2x3, Matrix3, Vector3};

use super::RenderSettings;
use crate::error::Result;
use crate::model::{build_covariance, sigmoid, Camera, GaussianSet};

/// One primitive after projection into a camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Projected2D {
    pub gaussian_index: usize,
    /// Pixel coordinates of the projected center.
    pub mean2d: [f64; 2],
    /// Screen covariance `(xx, xy, yy)` including the low-pass floor.
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d`, `(xx, xy, yy)`.
    pub conic: [f64; 3],
    /// Camera-space z.
    pub depth: f64,
    /// 3σ bound in pixels.
    pub radius: f64,
    /// Pixel rectangle `[x0, y0, x1, y1)` the primitive may touch.
    pub rect: [usize; 4],
    /// Sub-rectangle of `rect` outside of which `o·G < α_min`; used for binning.
    pub support: [usize; 4],
    pub opacity: f64,
    pub color: [f64; 3],
}

/// Quantities shared by projection and its adjoint.
pub(crate) struct Geometry {
    pub t: Vector3<f64>,
    pub jw: Matrix2x3<f64>,
    pub sigma: Matrix3<f64>,
    pub cov2d: [f64; 3],
}

pub(crate) fn jacobian(cam: &Camera, t: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / t.z;
    Matrix2x3::new(
        cam.fx * iz,
        0.0,
        -cam.fx * t.x * iz * iz,
        0.0,
        cam.fy * iz,
        -cam.fy * t.y * iz * iz,
    )
}

pub(crate) fn geometry(set: &GaussianSet, cam: &Camera, i: usize, floor: f64) -> Result<Geometry> {
    let mu = Vector3::from(set.means[i]);
    let t = cam.world_to_camera(&mu);
    let sigma = build_covariance(&set.log_scales[i], &set.rotations[i])
        .map_err(|_| crate::SplatError::NonFinite { what: "rotation norm", index: i })?
        .matrix;
    let jw = jacobian(cam, &t) * cam.rotation;
    let s2 = jw * sigma * jw.transpose();
    let cov2d = [s2[(0, 0)] + floor, 0.5 * (s2[(0, 1)] + s2[(1, 0)]), s2[(1, 1)] + floor];
    Ok(Geometry { t, jw, sigma, cov2d })
}

/// Projects every active primitive, culling those behind the near plane or
/// whose 3σ rectangle misses the image. The result is in input order.
pub fn project(
    set: &GaussianSet,
    cam: &Camera,
    settings: &RenderSettings,
    active: Option<&[bool]>,
) -> Result<Vec<Projected2D>> {
    cam.validate()?;
    set.check_parallel()?;
    set.check_finite()?;
    let mut out = Vec::with_capacity(set.len());
    for i in 0..set.len() {
        if active.is_some_and(|m| !m[i]) {
            continue;
        }
        let t = cam.world_to_camera(&Vector3::from(set.means[i]));
        if t.z <= settings.near_clip {
            continue;
        }
        let g = geometry(set, cam, i, settings.cov2d_floor)?;
        let [a, b, c] = g.cov2d;
        let det = a * c - b * b;
        if !(det > 0.0) {
            continue;
        }
        let half_tr = 0.5 * (a + c);
        let lambda_max = half_tr + (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let radius = (3.0 * lambda_max.sqrt()).ceil();
        let u = cam.fx * t.x / t.z + cam.cx;
        let v = cam.fy * t.y / t.z + cam.cy;
        let clamp = |lo: f64, n: usize| lo.clamp(0.0, n as f64) as usize;
        let rect = [
            clamp((u - radius).floor(), cam.width),
            clamp((v - radius).floor(), cam.height),
            clamp((u + radius).ceil(), cam.width),
            clamp((v + radius).ceil(), cam.height),
        ];
        if rect[0] >= rect[2] || rect[1] >= rect[3] {
            continue;
        }
        let opacity = sigmoid(set.opacity_logits[i]);
        let support = if opacity >= settings.alpha_min {
            // o·exp(−½ dᵀΣ'⁻¹d) ≥ α_min bounds |dx| by sqrt(2·ln(o/α_min)·Σ'xx)
            let l2 = 2.0 * (opacity / settings.alpha_min).ln() + 1e-6;
            let (hx, hy) = ((l2 * a).sqrt(), (l2 * c).sqrt());
            [
                clamp((u - hx).floor(), cam.width).max(rect[0]),
                clamp((v - hy).floor(), cam.height).max(rect[1]),
                clamp((u + hx).ceil(), cam.width).min(rect[2]),
                clamp((v + hy).ceil(), cam.height).min(rect[3]),
            ]
        } else {
            [rect[0], rect[1], rect[0], rect[1]]
        };
        let inv = 1.0 / det;
        out.push(Projected2D {
            gaussian_index: i,
            mean2d: [u, v],
            cov2d: g.cov2d,
            conic: [c * inv, -b * inv, a * inv],
            depth: t.z,
            radius,
            rect,
            support,
            opacity,
            color: set.colors[i],
        });
    }
    Ok(out)
}
