//! Monte-Carlo simulation of front-to-back blending with i.i.d. alphas.
//!
//! Each simulated pixel draws alphas independently until transmittance drops
//! below `T_sat`, following the renderer's rules: contributions below
//! `alpha_min` are skipped, larger ones are clamped to `alpha_max`, and the
//! contribution that crosses the threshold is still blended.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Result, SplatError};
use crate::render::RenderSettings;

/// Mean of the 2D Gaussian footprint over its 3σ disk, `(1 − e^{−4.5}) / 4.5`.
pub const MEAN_FOOTPRINT: f64 = 0.219_753_556_324_835;

/// Per-contribution alpha distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaModel {
    /// Uniform on `[0, 2·mean]`.
    Uniform { mean: f64 },
    /// Opacity `~ N(μ, σ)` clamped to `(0.01, 0.99)`, times a fixed footprint value.
    Footprint { mean_opacity: f64, std_opacity: f64, footprint: f64 },
}

impl AlphaModel {
    fn sampler(&self) -> Result<impl FnMut(&mut ChaCha8Rng) -> f64> {
        let model = *self;
        let normal = match model {
            AlphaModel::Uniform { mean } => {
                if !(mean > 0.0 && mean <= 0.5) {
                    return Err(SplatError::InvalidArgument(format!("uniform alpha mean must lie in (0, 0.5], got {mean}")));
                }
                None
            }
            AlphaModel::Footprint { mean_opacity, std_opacity, footprint } => {
                if !(footprint > 0.0 && footprint <= 1.0) {
                    return Err(SplatError::InvalidArgument(format!("footprint must lie in (0, 1], got {footprint}")));
                }
                if !(std_opacity >= 0.0 && std_opacity.is_finite()) {
                    return Err(SplatError::InvalidArgument(format!("opacity spread must be finite and ≥ 0, got {std_opacity}")));
                }
                Some(Normal::new(mean_opacity, std_opacity).map_err(|e| SplatError::InvalidArgument(e.to_string()))?)
            }
        };
        Ok(move |rng: &mut ChaCha8Rng| match (model, &normal) {
            (AlphaModel::Uniform { mean }, _) => rng.random_range(0.0..2.0 * mean),
            (AlphaModel::Footprint { footprint, .. }, Some(n)) => n.sample(rng).clamp(0.01, 0.99) * footprint,
            _ => unreachable!("sampler built for its own model"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StoppingEstimate {
    /// Mean number of blended contributions per pixel.
    pub mean_index: f64,
    /// Mean of every alpha drawn, skipped ones included.
    pub mean_alpha: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradEstimate {
    /// Mean of `∂C/∂α_m` for a uniformly chosen blended position `m`.
    pub mean: f64,
    pub std_error: f64,
    pub mean_alpha: f64,
    pub samples: usize,
}

/// Longest simulated sequence; only reachable with vanishing alphas.
const MAX_DRAWS: usize = 1 << 20;

/// Draws one pixel's blended alphas into `seq` and returns the final transmittance.
fn blend_sequence(
    draw: &mut impl FnMut(&mut ChaCha8Rng) -> f64,
    rng: &mut ChaCha8Rng,
    settings: &RenderSettings,
    seq: &mut Vec<f64>,
    alpha_sum: &mut f64,
    draws: &mut usize,
) -> Result<f64> {
    seq.clear();
    let mut t = 1.0;
    for _ in 0..MAX_DRAWS {
        let a = draw(rng);
        *alpha_sum += a;
        *draws += 1;
        if a < settings.alpha_min {
            continue;
        }
        let a = a.min(settings.alpha_max);
        seq.push(a);
        t *= 1.0 - a;
        if t < settings.t_saturation {
            return Ok(t);
        }
    }
    Err(SplatError::InvalidArgument("alpha model never saturates".into()))
}

/// Mean blend depth over `samples` simulated pixels.
pub fn simulate_stopping_index(
    model: AlphaModel,
    settings: &RenderSettings,
    samples: usize,
    seed: u64,
) -> Result<StoppingEstimate> {
    let mut draw = model.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut seq, mut alpha_sum, mut draws, mut total) = (Vec::new(), 0.0, 0usize, 0usize);
    for _ in 0..samples {
        blend_sequence(&mut draw, &mut rng, settings, &mut seq, &mut alpha_sum, &mut draws)?;
        total += seq.len();
    }
    Ok(StoppingEstimate {
        mean_index: total as f64 / samples.max(1) as f64,
        mean_alpha: alpha_sum / draws.max(1) as f64,
        samples,
    })
}

/// Mean `∂C/∂α_m` with every primitive colored `c0` over background `c_bg`,
/// evaluated from the full compositing sum rather than a simplified form.
pub fn simulate_grad_expectation(
    model: AlphaModel,
    c0: f64,
    c_bg: f64,
    settings: &RenderSettings,
    samples: usize,
    seed: u64,
) -> Result<GradEstimate> {
    if samples < 2 {
        return Err(SplatError::InvalidArgument("need at least two samples".into()));
    }
    let mut draw = model.sampler()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut seq, mut alpha_sum, mut draws) = (Vec::new(), 0.0, 0usize);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let t_end = blend_sequence(&mut draw, &mut rng, settings, &mut seq, &mut alpha_sum, &mut draws)?;
        let m = rng.random_range(0..seq.len());
        let mut t = 1.0;
        let mut t_m = 1.0;
        let mut behind = 0.0;
        for (i, &a) in seq.iter().enumerate() {
            if i == m {
                t_m = t;
            } else if i > m {
                behind += c0 * a * t;
            }
            t *= 1.0 - a;
        }
        let g = c0 * t_m - (behind + t_end * c_bg) / (1.0 - seq[m]);
        sum += g;
        sum_sq += g * g;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    Ok(GradEstimate { mean, std_error: (var / n).sqrt(), mean_alpha: alpha_sum / draws.max(1) as f64, samples })
}
