//! Adaptive density control over the under-training group: clone small
//! high-gradient primitives, split large ones, prune transparent ones.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SplatError};
use crate::grouping::GroupPartition;
use crate::model::{logit, quat_to_matrix, retain_parallel, sigmoid, volume, Gaussian, GaussianSet};
use crate::optim::AdamState;
use crate::render::GradientBuffer;

const SPLIT_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensifyParams {
    /// Threshold on the view-averaged screen-space position gradient (pixels).
    pub grad_threshold: f64,
    pub min_opacity: f64,
    /// Clone when the largest scale is at most this fraction of the extent.
    pub percent_dense: f64,
    pub split_scale_divisor: f64,
    /// Scene extent in world units.
    pub extent: f64,
}

impl DensifyParams {
    pub fn new(extent: f64) -> Self {
        Self { grad_threshold: 2e-4, min_opacity: 0.005, percent_dense: 0.01, split_scale_divisor: 1.6, extent }
    }
}

/// A primitive that crossed the gradient threshold.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ContributorRecord {
    pub iteration: usize,
    pub opacity: f64,
    pub volume: f64,
}

/// Opacities and volumes of every primitive at a densification step.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSnapshot {
    pub iteration: usize,
    pub opacities: Vec<f64>,
    pub volumes: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensifyState {
    pub grad_accum: Vec<f64>,
    pub denom: Vec<u32>,
    /// Summed world-space position gradients, used to orient clones.
    pub grad3d_accum: Vec<[f64; 3]>,
    /// When set, contributor and population statistics are recorded.
    pub log_contributors: bool,
    pub contributor_log: Vec<ContributorRecord>,
    pub population_log: Vec<PopulationSnapshot>,
}

impl DensifyState {
    pub fn new(n: usize) -> Self {
        Self { grad_accum: vec![0.0; n], denom: vec![0; n], grad3d_accum: vec![[0.0; 3]; n], ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.grad_accum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_accum.is_empty()
    }

    /// Adds `‖∂L/∂(x, y)‖` to every visible row and counts the view.
    pub fn accumulate(&mut self, grads: &GradientBuffer, visible: &[bool]) {
        assert!(grads.len() == self.len() && visible.len() == self.len(), "densify state must be parallel");
        for i in (0..self.len()).filter(|&i| visible[i]) {
            let [gx, gy] = grads.d_means2d[i];
            self.grad_accum[i] += gx.hypot(gy);
            self.denom[i] += 1;
            for c in 0..3 {
                self.grad3d_accum[i][c] += grads.d_mean3d[i][c];
            }
        }
    }

    pub fn average(&self, i: usize) -> f64 {
        if self.denom[i] == 0 {
            0.0
        } else {
            self.grad_accum[i] / self.denom[i] as f64
        }
    }

    pub fn reset(&mut self) {
        let n = self.len();
        self.grad_accum = vec![0.0; n];
        self.denom = vec![0; n];
        self.grad3d_accum = vec![[0.0; 3]; n];
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        retain_parallel(&mut self.grad_accum, keep);
        retain_parallel(&mut self.denom, keep);
        retain_parallel(&mut self.grad3d_accum, keep);
    }

    pub fn grow(&mut self, n: usize) {
        let m = self.len() + n;
        self.grad_accum.resize(m, 0.0);
        self.denom.resize(m, 0);
        self.grad3d_accum.resize(m, [0.0; 3]);
    }
}

/// Structural change applied by one densification call: first keep the rows
/// flagged in `keep`, then append `appended` new rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowEdit {
    pub keep: Vec<bool>,
    pub appended: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub edit: RowEdit,
}

/// Clones, splits and prunes under-training rows, then remaps the optimizer
/// state, partition and accumulators to the new row layout. Accumulators are
/// reset afterwards.
#[allow(clippy::too_many_arguments)]
pub fn densify_and_prune(
    set: &mut GaussianSet,
    state: &mut DensifyState,
    adam: &mut AdamState,
    partition: &mut GroupPartition,
    params: &DensifyParams,
    position_lr: f64,
    seed: u64,
    iteration: usize,
) -> Result<DensifyReport> {
    let n = set.len();
    set.check_parallel()?;
    adam.check_parallel()?;
    if state.len() != n || adam.len() != n || partition.len() != n {
        return Err(SplatError::Dimension(format!(
            "set {n}, densify state {}, optimizer {}, partition {}",
            state.len(),
            adam.len(),
            partition.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM_SALT);
    rng.set_stream(iteration as u64);

    if state.log_contributors {
        state.population_log.push(PopulationSnapshot {
            iteration,
            opacities: set.opacities(),
            volumes: set.volumes(),
        });
    }

    let clone_limit = params.percent_dense * params.extent;
    let mut keep = vec![true; n];
    let mut fresh = GaussianSet::default();
    let mut report = DensifyReport::default();
    for i in 0..n {
        if !partition.is_under_training(i) || state.average(i) <= params.grad_threshold {
            continue;
        }
        let g = set.row(i);
        if state.log_contributors {
            state.contributor_log.push(ContributorRecord {
                iteration,
                opacity: g.opacity(),
                volume: volume(&g.log_scale),
            });
        }
        let max_scale = g.log_scale.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
        if max_scale <= clone_limit {
            let d = Vector3::from(state.grad3d_accum[i]);
            let norm = d.norm();
            let mut c = g;
            if norm > 0.0 && norm.is_finite() {
                let step = -position_lr * d / norm;
                for k in 0..3 {
                    c.mean[k] += step[k];
                }
            }
            fresh.push(c);
            report.cloned += 1;
        } else {
            let r = quat_to_matrix(&g.rotation);
            let s = Vector3::from(g.log_scale.map(f64::exp));
            let shrink = params.split_scale_divisor.ln();
            for _ in 0..2 {
                let z = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                let offset = r * s.component_mul(&z);
                fresh.push(Gaussian {
                    mean: [g.mean[0] + offset.x, g.mean[1] + offset.y, g.mean[2] + offset.z],
                    log_scale: g.log_scale.map(|l| l - shrink),
                    ..g
                });
            }
            keep[i] = false;
            report.split += 1;
        }
    }
    for i in 0..n {
        if keep[i] && partition.is_under_training(i) && sigmoid(set.opacity_logits[i]) < params.min_opacity {
            keep[i] = false;
            report.pruned += 1;
        }
    }

    let edit = RowEdit { keep, appended: fresh.len() };
    set.retain_rows(&edit.keep);
    set.extend_from(&fresh);
    adam.retain_rows(&edit.keep);
    adam.grow(edit.appended);
    partition.retain_rows(&edit.keep);
    partition.grow(edit.appended);
    state.retain_rows(&edit.keep);
    state.grow(edit.appended);
    state.reset();
    report.edit = edit;
    Ok(report)
}

/// Caps the opacity of every under-training row at 0.01. Rows already below
/// the cap keep their exact bits.
pub fn reset_opacity(set: &mut GaussianSet, partition: &GroupPartition) {
    let cap = logit(0.01);
    for i in 0..set.len() {
        if partition.is_under_training(i) && set.opacity_logits[i] > cap {
            set.opacity_logits[i] = cap;
        }
    }
}
