//! Blend depth against mean opacity on a fixed random scene.

use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::model::{logit, GaussianSet};
use crate::render::{expected_blend_depth_oracle, render_forward, RenderSettings};
use crate::scene::{fibonacci_cameras, random_gaussians};

use super::montecarlo::{simulate_stopping_index, AlphaModel, MEAN_FOOTPRINT};
use super::run_metrics::write_csv;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prop2Config {
    pub primitives: usize,
    pub width: usize,
    pub height: usize,
    pub views: usize,
    pub scale_range: [f64; 2],
    pub camera_distance: f64,
    pub focal_factor: f64,
    pub mean_opacities: Vec<f64>,
    pub opacity_std: f64,
    pub t_saturation: f64,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for Prop2Config {
    fn default() -> Self {
        Self {
            primitives: 10_000,
            width: 256,
            height: 256,
            views: 8,
            scale_range: [0.02, 0.08],
            camera_distance: 2.5,
            focal_factor: 0.9,
            mean_opacities: (1..=9).map(|i| i as f64 / 10.0).collect(),
            opacity_std: 0.1,
            t_saturation: 1e-4,
            mc_samples: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prop2Row {
    pub mean_opacity_target: f64,
    /// Mean of the clamped opacities actually assigned.
    pub mean_opacity: f64,
    /// Mean blend count per pixel over all views.
    pub mean_blends: f64,
    /// Mean blend count over pixels that reached `T_sat`.
    pub mean_blends_saturated: f64,
    pub saturated_fraction: f64,
    pub forward_ms: f64,
    /// Closed-form depth with `E[G²ᴰ]` taken as the mean footprint over the 3σ disk.
    pub predicted_depth: f64,
    /// Mean stopping index of the matching i.i.d. simulation.
    pub simulated_depth: f64,
    /// Same simulation with the renderer's rule of skipping alphas below `alpha_min`.
    pub simulated_depth_with_skip: f64,
    pub relative_error: f64,
}

/// Opacities `N(μ, σ)` clamped to `(0.01, 0.99)`, from a fixed standard-normal draw per primitive.
fn assign_opacities(set: &mut GaussianSet, z: &[f64], mu: f64, std: f64) -> f64 {
    let mut sum = 0.0;
    for (l, &zi) in set.opacity_logits.iter_mut().zip(z) {
        let o = (mu + std * zi).clamp(0.01, 0.99);
        sum += o;
        *l = logit(o);
    }
    sum / z.len().max(1) as f64
}

pub fn run_prop2(cfg: &Prop2Config) -> Result<Vec<Prop2Row>> {
    if cfg.primitives == 0 || cfg.views == 0 || cfg.mc_samples == 0 {
        return Err(SplatError::Config("prop2 needs primitives, views and samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut set = random_gaussians(&mut rng, cfg.primitives, cfg.scale_range);
    let z: Vec<f64> = (0..cfg.primitives).map(|_| StandardNormal.sample(&mut rng)).collect();
    let focal = cfg.focal_factor * cfg.width as f64;
    let cameras = fibonacci_cameras(cfg.views, cfg.camera_distance, focal, (cfg.width, cfg.height))?;
    let settings = RenderSettings { t_saturation: cfg.t_saturation, ..RenderSettings::default() };

    let mut rows = Vec::with_capacity(cfg.mean_opacities.len());
    for (i, &mu) in cfg.mean_opacities.iter().enumerate() {
        let mean_opacity = assign_opacities(&mut set, &z, mu, cfg.opacity_std);
        let (mut blends, mut pixels, mut sat_blends, mut sat_pixels) = (0u64, 0usize, 0u64, 0usize);
        let started = Instant::now();
        for cam in &cameras {
            let out = render_forward(&set, cam, [0.0; 3], &settings)?;
            blends += out.total_blends();
            pixels += out.blend_counts.len();
            for (&n, &t) in out.blend_counts.iter().zip(&out.final_transmittance) {
                if t < settings.t_saturation {
                    sat_blends += n as u64;
                    sat_pixels += 1;
                }
            }
        }
        let forward_ms = started.elapsed().as_secs_f64() * 1e3 / cameras.len() as f64;
        let model = AlphaModel::Footprint { mean_opacity: mu, std_opacity: cfg.opacity_std, footprint: MEAN_FOOTPRINT };
        let mc_seed = cfg.seed.wrapping_add(i as u64);
        // the closed form assumes every draw is blended
        let sim = simulate_stopping_index(model, &RenderSettings { alpha_min: 0.0, ..settings }, cfg.mc_samples, mc_seed)?;
        let skip = simulate_stopping_index(model, &settings, cfg.mc_samples, mc_seed)?;
        let predicted_depth = expected_blend_depth_oracle(sim.mean_alpha / MEAN_FOOTPRINT, MEAN_FOOTPRINT, cfg.t_saturation)?;
        rows.push(Prop2Row {
            mean_opacity_target: mu,
            mean_opacity,
            mean_blends: blends as f64 / pixels as f64,
            mean_blends_saturated: if sat_pixels == 0 { f64::NAN } else { sat_blends as f64 / sat_pixels as f64 },
            saturated_fraction: sat_pixels as f64 / pixels as f64,
            forward_ms,
            predicted_depth,
            simulated_depth: sim.mean_index,
            simulated_depth_with_skip: skip.mean_index,
            relative_error: (sim.mean_index - predicted_depth).abs() / predicted_depth,
        });
    }
    Ok(rows)
}

/// Writes `prop2.csv`, one row per mean opacity.
pub fn write_prop2(rows: &[Prop2Row], dir: &Path) -> Result<()> {
    write_csv(&dir.join("prop2.csv"), rows)
}
