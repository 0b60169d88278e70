//! Masked Adam over raw primitive parameters.
//!
//! Every primitive keeps its own step counter for bias correction. Rows that
//! are masked out are left untouched: parameters, moments and counters.

use crate::error::{Result, SplatError};
use crate::model::{normalize_quat, retain_parallel, GaussianSet};
use crate::render::GradientBuffer;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-parameter-group learning rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub means: f64,
    pub log_scales: f64,
    pub rotations: f64,
    pub opacity: f64,
    pub colors: f64,
}

impl LearningRates {
    /// Defaults for a scene of the given extent at the start of training.
    pub fn initial(extent: f64) -> Self {
        Self { means: 1.6e-4 * extent, log_scales: 5e-3, rotations: 1e-3, opacity: 0.05, colors: 2.5e-3 }
    }

    /// Position rate decayed log-linearly from `1.6e-4·extent` to `1.6e-6·extent`.
    pub fn at(extent: f64, iteration: usize, total: usize) -> Self {
        let mut lr = Self::initial(extent);
        let t = if total == 0 { 0.0 } else { (iteration as f64 / total as f64).clamp(0.0, 1.0) };
        let (a, b) = ((1.6e-4 * extent).ln(), (1.6e-6 * extent).ln());
        lr.means = (a + (b - a) * t).exp();
        lr
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Moments<const N: usize> {
    pub m: Vec<[f64; N]>,
    pub v: Vec<[f64; N]>,
}

impl<const N: usize> Moments<N> {
    fn zeros(n: usize) -> Self {
        Self { m: vec![[0.0; N]; n], v: vec![[0.0; N]; n] }
    }

    fn retain(&mut self, keep: &[bool]) {
        retain_parallel(&mut self.m, keep);
        retain_parallel(&mut self.v, keep);
    }

    fn grow(&mut self, n: usize) {
        self.m.resize(self.m.len() + n, [0.0; N]);
        self.v.resize(self.v.len() + n, [0.0; N]);
    }

    fn len(&self) -> usize {
        self.m.len()
    }

    #[allow(clippy::too_many_arguments)]
    fn update(&mut self, i: usize, p: &mut [f64; N], g: &[f64; N], lr: f64, bc1: f64, bc2_sqrt: f64) {
        for c in 0..N {
            let m = BETA1 * self.m[i][c] + (1.0 - BETA1) * g[c];
            let v = BETA2 * self.v[i][c] + (1.0 - BETA2) * g[c] * g[c];
            self.m[i][c] = m;
            self.v[i][c] = v;
            p[c] -= lr / bc1 * m / (v.sqrt() / bc2_sqrt + EPSILON);
        }
    }
}

/// Optimizer state of a single row, for comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamRow {
    pub means: ([f64; 3], [f64; 3]),
    pub log_scales: ([f64; 3], [f64; 3]),
    pub rotations: ([f64; 4], [f64; 4]),
    pub opacity: ([f64; 1], [f64; 1]),
    pub colors: ([f64; 3], [f64; 3]),
    pub steps: u64,
}

/// First and second moments for every raw parameter array plus per-row step counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    pub means: Moments<3>,
    pub log_scales: Moments<3>,
    pub rotations: Moments<4>,
    pub opacity: Moments<1>,
    pub colors: Moments<3>,
    pub step_counts: Vec<u64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            means: Moments::zeros(n),
            log_scales: Moments::zeros(n),
            rotations: Moments::zeros(n),
            opacity: Moments::zeros(n),
            colors: Moments::zeros(n),
            step_counts: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.step_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.step_counts.is_empty()
    }

    pub fn row(&self, i: usize) -> AdamRow {
        AdamRow {
            means: (self.means.m[i], self.means.v[i]),
            log_scales: (self.log_scales.m[i], self.log_scales.v[i]),
            rotations: (self.rotations.m[i], self.rotations.v[i]),
            opacity: (self.opacity.m[i], self.opacity.v[i]),
            colors: (self.colors.m[i], self.colors.v[i]),
            steps: self.step_counts[i],
        }
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        self.means.retain(keep);
        self.log_scales.retain(keep);
        self.rotations.retain(keep);
        self.opacity.retain(keep);
        self.colors.retain(keep);
        retain_parallel(&mut self.step_counts, keep);
    }

    /// Appends `n` fresh rows with zero moments.
    pub fn grow(&mut self, n: usize) {
        self.means.grow(n);
        self.log_scales.grow(n);
        self.rotations.grow(n);
        self.opacity.grow(n);
        self.colors.grow(n);
        self.step_counts.resize(self.step_counts.len() + n, 0);
    }

    pub fn check_parallel(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.means.len(),
            self.log_scales.len(),
            self.rotations.len(),
            self.opacity.len(),
            self.colors.len(),
            self.means.v.len(),
            self.log_scales.v.len(),
            self.rotations.v.len(),
            self.opacity.v.len(),
            self.colors.v.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(SplatError::Dimension(format!("optimizer arrays have lengths {lens:?}, expected {n}")));
        }
        Ok(())
    }

    pub fn all_second_moments_nonnegative(&self) -> bool {
        self.means.v.iter().flatten().all(|&v| v >= 0.0)
            && self.log_scales.v.iter().flatten().all(|&v| v >= 0.0)
            && self.rotations.v.iter().flatten().all(|&v| v >= 0.0)
            && self.opacity.v.iter().flatten().all(|&v| v >= 0.0)
            && self.colors.v.iter().flatten().all(|&v| v >= 0.0)
    }
}

fn check_grads(grads: &GradientBuffer, mask: &[bool]) -> Result<()> {
    for i in (0..grads.len()).filter(|&i| mask[i]) {
        let bad = |what: &'static str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(SplatError::NonFinite { what, index: i })
            }
        };
        bad("mean gradient", &grads.d_mean3d[i])?;
        bad("log-scale gradient", &grads.d_log_scale[i])?;
        bad("rotation gradient", &grads.d_rotation[i])?;
        bad("opacity gradient", &[grads.d_opacity[i]])?;
        bad("color gradient", &grads.d_color[i])?;
    }
    Ok(())
}

/// One Adam step on the rows where `active` is true. Rotations are
/// renormalized and colors clamped to `[0, 1]` afterwards.
pub fn step(
    set: &mut GaussianSet,
    grads: &GradientBuffer,
    state: &mut AdamState,
    active: &[bool],
    lr: &LearningRates,
) -> Result<()> {
    let n = set.len();
    state.check_parallel()?;
    if grads.len() != n || state.len() != n || active.len() != n {
        return Err(SplatError::Dimension(format!(
            "set {n}, gradients {}, optimizer {}, mask {}",
            grads.len(),
            state.len(),
            active.len()
        )));
    }
    check_grads(grads, active)?;
    for i in (0..n).filter(|&i| active[i]) {
        state.step_counts[i] += 1;
        let t = state.step_counts[i] as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2_sqrt = (1.0 - BETA2.powi(t)).sqrt();
        state.means.update(i, &mut set.means[i], &grads.d_mean3d[i], lr.means, bc1, bc2_sqrt);
        state.log_scales.update(i, &mut set.log_scales[i], &grads.d_log_scale[i], lr.log_scales, bc1, bc2_sqrt);
        state.rotations.update(i, &mut set.rotations[i], &grads.d_rotation[i], lr.rotations, bc1, bc2_sqrt);
        let mut o = [set.opacity_logits[i]];
        state.opacity.update(i, &mut o, &[grads.d_opacity[i]], lr.opacity, bc1, bc2_sqrt);
        set.opacity_logits[i] = o[0];
        state.colors.update(i, &mut set.colors[i], &grads.d_color[i], lr.colors, bc1, bc2_sqrt);
        set.rotations[i] = normalize_quat(&set.rotations[i]).unwrap_or([1.0, 0.0, 0.0, 0.0]);
        for c in set.colors[i].iter_mut() {
            *c = c.clamp(0.0, 1.0);
        }
    }
    Ok(())
}
