use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GroupPartition, ImportanceState};
use crate::error::{Result, SplatError};
use crate::model::{sigmoid, volume, GaussianSet};

/// Smallest sampling weight; keeps every primitive selectable.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// How primitives are weighted when drawing the under-training group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform weights.
    Random,
    /// Weight = activated opacity.
    #[serde(rename = "ops")]
    #[value(name = "ops")]
    Opacity,
    /// Weight = product of activated scales.
    Volume,
    /// Weight = opacity × volume.
    #[serde(rename = "vol_opac")]
    #[value(name = "vol_opac")]
    VolumeOpacity,
    /// Weight = mean blending weight per view in which the row was last rendered.
    Importance,
}

impl Strategy {
    pub const ALL: [Strategy; 5] =
        [Strategy::Random, Strategy::Opacity, Strategy::Volume, Strategy::VolumeOpacity, Strategy::Importance];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Opacity => "ops",
            Strategy::Volume => "volume",
            Strategy::VolumeOpacity => "vol_opac",
            Strategy::Importance => "importance",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Unnormalized sampling weights, floored at [`WEIGHT_FLOOR`].
pub fn sample_weights(set: &GaussianSet, strategy: Strategy, importance: &ImportanceState) -> Vec<f64> {
    let n = set.len();
    let raw: Vec<f64> = match strategy {
        Strategy::Random => vec![1.0; n],
        Strategy::Opacity => set.opacity_logits.iter().map(|&l| sigmoid(l)).collect(),
        Strategy::Volume => set.log_scales.iter().map(volume).collect(),
        Strategy::VolumeOpacity => {
            (0..n).map(|i| sigmoid(set.opacity_logits[i]) * volume(&set.log_scales[i])).collect()
        }
        Strategy::Importance => {
            assert_eq!(importance.len(), n, "importance state must be parallel to the set");
            importance.scores()
        }
    };
    raw.into_iter().map(|w| if w.is_finite() { w.max(WEIGHT_FLOOR) } else { WEIGHT_FLOOR }).collect()
}

/// `p_i = θ_i / Σθ`.
pub fn probabilities(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Draws `⌈utr·N⌉` primitives without replacement with probability
/// proportional to their weights (exponential keys, top-k).
///
/// The generator is keyed by `(seed, iteration)` so resampling never perturbs
/// any other random stream of a run.
pub fn resample(
    set: &GaussianSet,
    strategy: Strategy,
    importance: &ImportanceState,
    utr: f64,
    seed: u64,
    iteration: usize,
) -> Result<GroupPartition> {
    if !(utr > 0.0 && utr <= 1.0) {
        return Err(SplatError::InvalidArgument(format!("under-training ratio must lie in (0, 1], got {utr}")));
    }
    let n = set.len();
    let k = ((utr * n as f64).ceil() as usize).min(n);
    let weights = sample_weights(set, strategy, importance);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration as u64);
    // key_i = ln(u_i)/θ_i orders exactly like u_i^(1/θ_i)
    let mut keys: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = 1.0 - rng.random::<f64>();
            (u.ln() / w, i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut mask = vec![false; n];
    for &(_, i) in &keys[..k] {
        mask[i] = true;
    }
    Ok(GroupPartition::from_mask(mask, iteration, Some(strategy), utr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{logit, Gaussian};
    use approx::assert_relative_eq;

    fn set_with(opacities: &[f64], log_scales: &[[f64; 3]]) -> GaussianSet {
        GaussianSet::from_rows(opacities.iter().zip(log_scales).map(|(&o, &s)| Gaussian {
            mean: [0.0; 3],
            log_scale: s,
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(o),
            color: [0.5; 3],
        }))
    }

    #[test]
    fn ops_equal_logits_is_uniform() {
        let set = set_with(&[0.3; 4], &[[0.0; 3]; 4]);
        let p = probabilities(&sample_weights(&set, Strategy::Opacity, &ImportanceState::new(4)));
        for v in p {
            assert_relative_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn ops_follows_opacity() {
        let set = set_with(&[0.8, 0.2], &[[0.0; 3]; 2]);
        let p = probabilities(&sample_weights(&set, Strategy::Opacity, &ImportanceState::new(2)));
        assert_relative_eq!(p[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.2, epsilon = 1e-12);
    }

    #[test]
    fn vol_opac_by_hand() {
        let set = set_with(&[0.5, 0.5], &[[2f64.ln(), 0.0, 0.0], [2f64.ln(), 3f64.ln(), 0.0]]);
        let p = probabilities(&sample_weights(&set, Strategy::VolumeOpacity, &ImportanceState::new(2)));
        assert_relative_eq!(p[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(p[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn importance_weights_are_floored() {
        let set = set_with(&[0.5, 0.5], &[[0.0; 3]; 2]);
        let mut imp = ImportanceState::new(2);
        imp.score[0] = 3.0;
        let w = sample_weights(&set, Strategy::Importance, &imp);
        assert_eq!(w, vec![3.0, WEIGHT_FLOOR]);
    }

    #[test]
    fn utr_one_selects_everything() {
        let set = set_with(&[0.1, 0.9, 0.5], &[[0.0; 3]; 3]);
        let p = resample(&set, Strategy::Opacity, &ImportanceState::new(3), 1.0, 7, 100).unwrap();
        assert!(p.is_merged());
    }

    #[test]
    fn utr_out_of_range() {
        let set = set_with(&[0.5], &[[0.0; 3]]);
        for utr in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(resample(&set, Strategy::Random, &ImportanceState::new(1), utr, 0, 0).is_err());
        }
    }

    #[test]
    fn size_is_ceiling() {
        let set = set_with(&[0.5; 10], &[[0.0; 3]; 10]);
        let p = resample(&set, Strategy::Random, &ImportanceState::new(10), 0.25, 1, 5).unwrap();
        assert_eq!(p.under_training_count(), 3);
        assert_eq!(resample(&GaussianSet::default(), Strategy::Random, &ImportanceState::new(0), 0.5, 1, 5)
            .unwrap()
            .len(), 0);
    }

    #[test]
    fn k1_frequency_matches_weight() {
        let set = set_with(&[0.9, 0.1], &[[0.0; 3]; 2]);
        let imp = ImportanceState::new(2);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|&it| resample(&set, Strategy::Opacity, &imp, 0.5, 11, it).unwrap().is_under_training(0))
            .count();
        assert!((hits as f64 / draws as f64 - 0.9).abs() < 0.01);
    }

    #[test]
    fn uniform_half_inclusion() {
        let set = set_with(&[0.5; 4], &[[0.0; 3]; 4]);
        let imp = ImportanceState::new(4);
        let draws = 100_000;
        let mut counts = [0usize; 4];
        for it in 0..draws {
            for i in resample(&set, Strategy::Random, &imp, 0.5, 3, it).unwrap().under_training() {
                counts[i] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn deterministic_per_seed_and_iteration() {
        let set = set_with(&[0.2, 0.4, 0.6, 0.8, 0.3], &[[0.0; 3]; 5]);
        let imp = ImportanceState::new(5);
        let a = resample(&set, Strategy::Opacity, &imp, 0.6, 9, 150).unwrap();
        assert_eq!(a, resample(&set, Strategy::Opacity, &imp, 0.6, 9, 150).unwrap());
    }
}
