//! Gaussian primitives, the structure-of-arrays scene container and cameras.
//!
//! Parameters are stored raw: opacity as a logit, scale as a log, rotation as a
//! (not necessarily unit) quaternion `[w, x, y, z]`. Optimization works on the raw
//! values; [`GaussianSet::activate`] produces the values the renderer consumes.

mod camera;
pub mod ply;

pub use camera::Camera;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Result, SplatError};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// One primitive's raw parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: [f64; 3],
    pub log_scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity_logit: f64,
    pub color: [f64; 3],
}

impl Gaussian {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }
}

/// Structure-of-arrays store of raw primitive parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianSet {
    pub means: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    pub colors: Vec<[f64; 3]>,
}

/// Activated views of a [`GaussianSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Activated {
    pub opacities: Vec<f64>,
    pub scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
}

impl GaussianSet {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            means: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            opacity_logits: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    pub fn from_rows(rows: impl IntoIterator<Item = Gaussian>) -> Self {
        let mut set = Self::default();
        for g in rows {
            set.push(g);
        }
        set
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn push(&mut self, g: Gaussian) {
        self.means.push(g.mean);
        self.log_scales.push(g.log_scale);
        self.rotations.push(g.rotation);
        self.opacity_logits.push(g.opacity_logit);
        self.colors.push(g.color);
    }

    pub fn row(&self, i: usize) -> Gaussian {
        Gaussian {
            mean: self.means[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            opacity_logit: self.opacity_logits[i],
            color: self.colors[i],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = Gaussian> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    /// Keeps the rows whose `keep` flag is set, preserving order.
    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len(), "keep mask must be parallel to the set");
        retain_parallel(&mut self.means, keep);
        retain_parallel(&mut self.log_scales, keep);
        retain_parallel(&mut self.rotations, keep);
        retain_parallel(&mut self.opacity_logits, keep);
        retain_parallel(&mut self.colors, keep);
    }

    pub fn extend_from(&mut self, other: &GaussianSet) {
        self.means.extend_from_slice(&other.means);
        self.log_scales.extend_from_slice(&other.log_scales);
        self.rotations.extend_from_slice(&other.rotations);
        self.opacity_logits.extend_from_slice(&other.opacity_logits);
        self.colors.extend_from_slice(&other.colors);
    }

    /// Checks that all parallel arrays agree in length.
    pub fn check_parallel(&self) -> Result<()> {
        let n = self.means.len();
        let lens = [
            self.log_scales.len(),
            self.rotations.len(),
            self.opacity_logits.len(),
            self.colors.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(SplatError::Dimension(format!(
                "parameter arrays disagree: means {n}, others {lens:?}"
            )));
        }
        Ok(())
    }

    /// Returns the index of the first primitive holding a non-finite raw parameter.
    pub fn check_finite(&self) -> Result<()> {
        for i in 0..self.len() {
            let what = if !self.means[i].iter().all(|v| v.is_finite()) {
                "mean"
            } else if !self.log_scales[i].iter().all(|v| v.is_finite()) {
                "log_scale"
            } else if !self.rotations[i].iter().all(|v| v.is_finite()) {
                "rotation"
            } else if !self.opacity_logits[i].is_finite() {
                "opacity_logit"
            } else if !self.colors[i].iter().all(|v| v.is_finite()) {
                "color"
            } else {
                continue;
            };
            return Err(SplatError::NonFinite { what, index: i });
        }
        Ok(())
    }

    pub fn opacity(&self, i: usize) -> f64 {
        sigmoid(self.opacity_logits[i])
    }

    pub fn opacities(&self) -> Vec<f64> {
        self.opacity_logits.iter().map(|&l| sigmoid(l)).collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.log_scales.iter().map(volume).collect()
    }

    /// Applies the sigmoid/exp activations and renormalizes rotations.
    pub fn activate(&self) -> Result<Activated> {
        self.check_parallel()?;
        self.check_finite()?;
        let mut rotations = Vec::with_capacity(self.len());
        for (i, q) in self.rotations.iter().enumerate() {
            rotations.push(normalize_quat(q).ok_or(SplatError::NonFinite { what: "rotation norm", index: i })?);
        }
        Ok(Activated {
            opacities: self.opacities(),
            scales: self.log_scales.iter().map(|s| [s[0].exp(), s[1].exp(), s[2].exp()]).collect(),
            rotations,
        })
    }
}

pub(crate) fn retain_parallel<T>(v: &mut Vec<T>, keep: &[bool]) {
    let mut flags = keep.iter();
    v.retain(|_| *flags.next().expect("mask shorter than array"));
}

/// Symmetric 3×3 world-space covariance `R diag(s)² Rᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3D {
    pub matrix: Matrix3<f64>,
}

pub fn normalize_quat(q: &[f64; 4]) -> Option<[f64; 4]> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n > 0.0 && n.is_finite() {
        Some([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
    } else {
        None
    }
}

/// Rotation matrix of a unit quaternion `[w, x, y, z]`.
pub fn quat_to_matrix(q: &[f64; 4]) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls a gradient w.r.t. the rotation matrix back to the unit quaternion.
pub(crate) fn quat_matrix_vjp(q: &[f64; 4], d_r: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = *q;
    let g = |r: usize, c: usize| d_r[(r, c)];
    let dw = 2.0
        * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    [dw, dx, dy, dz]
}

/// Builds `Σ = R diag(exp(log_scale))² Rᵀ`.
pub fn build_covariance(log_scale: &[f64; 3], rotation: &[f64; 4]) -> Result<Covariance3D> {
    let q = normalize_quat(rotation)
        .ok_or_else(|| SplatError::InvalidArgument("zero-norm quaternion".into()))?;
    let r = quat_to_matrix(&q);
    let s = Vector3::new(log_scale[0].exp(), log_scale[1].exp(), log_scale[2].exp());
    let m = r * Matrix3::from_diagonal(&s);
    let sigma = m * m.transpose();
    // exact symmetry; the two triangles can differ in the last ulp otherwise
    let sym = (sigma + sigma.transpose()) * 0.5;
    Ok(Covariance3D { matrix: sym })
}

/// Volume proxy: the product of the activated scales.
pub fn volume(log_scale: &[f64; 3]) -> f64 {
    log_scale[0].exp() * log_scale[1].exp() * log_scale[2].exp()
}
