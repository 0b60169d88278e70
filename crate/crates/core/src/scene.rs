//! Closed-loop synthetic scenes: a random ground-truth set, a ring of cameras
//! on a Fibonacci sphere, and targets rendered with the same renderer.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::model::{logit, normalize_quat, Camera, Gaussian, GaussianSet};
use crate::render::{render_forward, Image, RenderSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSpec {
    pub gt_count: usize,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    /// Distance of every camera from the origin.
    pub camera_distance: f64,
    /// Focal length as a multiple of the image width.
    pub focal_factor: f64,
    /// Ground-truth scales are log-uniform in this range.
    pub scale_range: [f64; 2],
    /// Every view whose index is a multiple of this is held out.
    pub test_every: usize,
    pub background: [f64; 3],
    pub init_count: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            gt_count: 800,
            views: 24,
            width: 128,
            height: 128,
            camera_distance: 2.5,
            focal_factor: 0.9,
            scale_range: [0.005, 0.05],
            test_every: 8,
            background: [0.0; 3],
            init_count: 100,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SplatError::Config(m));
        if self.views == 0 || self.width == 0 || self.height == 0 {
            return bad("scene needs at least one view and a non-empty resolution".into());
        }
        if !(self.camera_distance > 0.9) {
            return bad(format!("camera_distance must exceed the scene box, got {}", self.camera_distance));
        }
        if !(self.focal_factor > 0.0) {
            return bad(format!("focal_factor must be positive, got {}", self.focal_factor));
        }
        let [lo, hi] = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("scale_range must satisfy 0 < lo <= hi, got {:?}", self.scale_range));
        }
        if self.test_every < 2 {
            return bad("test_every must be at least 2 so some views remain for training".into());
        }
        if self.init_count < 4 {
            return bad("init_count must be at least 4".into());
        }
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return bad("background must lie in [0, 1]".into());
        }
        Ok(())
    }
}

pub fn random_rotation<R: Rng>(rng: &mut R) -> [f64; 4] {
    loop {
        let q = [0; 4].map(|_| StandardNormal.sample(rng));
        if let Some(q) = normalize_quat(&q) {
            return q;
        }
    }
}

/// `count` primitives with means uniform in `[-0.5, 0.5]³`, log-uniform scales,
/// Beta(2, 2) opacities, uniform colors and uniformly random rotations.
pub fn random_gaussians<R: Rng>(rng: &mut R, count: usize, scale_range: [f64; 2]) -> GaussianSet {
    let beta = Beta::new(2.0, 2.0).expect("valid Beta parameters");
    let (lo, hi) = (scale_range[0].ln(), scale_range[1].ln());
    let mut set = GaussianSet::with_capacity(count);
    for _ in 0..count {
        let mean = [0; 3].map(|_| rng.random_range(-0.5..0.5));
        let log_scale = [0; 3].map(|_| if lo < hi { rng.random_range(lo..hi) } else { lo });
        let rotation = random_rotation(rng);
        let o: f64 = beta.sample(rng);
        let color = [0; 3].map(|_| rng.random::<f64>());
        set.push(Gaussian { mean, log_scale, rotation, opacity_logit: logit(o.clamp(1e-4, 1.0 - 1e-4)), color });
    }
    set
}

/// `n` cameras on a Fibonacci sphere of radius `distance`, all looking at the origin.
pub fn fibonacci_cameras(n: usize, distance: f64, focal: f64, size: (usize, usize)) -> Result<Vec<Camera>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let phi = golden * i as f64;
            let eye = Vector3::new(r * phi.cos(), y, r * phi.sin()) * distance;
            Camera::look_at(eye, Vector3::zeros(), Vector3::y(), focal, size)
        })
        .collect()
}

/// Initial model: random points in the scene box with opacity 0.1 and an
/// isotropic scale from the mean squared distance to the three nearest neighbours.
pub fn initial_gaussians<R: Rng>(rng: &mut R, count: usize) -> GaussianSet {
    let means: Vec<[f64; 3]> = (0..count).map(|_| [0; 3].map(|_| rng.random_range(-0.5..0.5))).collect();
    let mut set = GaussianSet::with_capacity(count);
    for (i, m) in means.iter().enumerate() {
        let mut d2: Vec<f64> = means
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, o)| (0..3).map(|c| (m[c] - o[c]).powi(2)).sum())
            .collect();
        d2.sort_by(f64::total_cmp);
        let k = d2.len().min(3);
        let mean_d2 = (d2[..k].iter().sum::<f64>() / k.max(1) as f64).max(1e-7);
        let color = [0; 3].map(|_| rng.random::<f64>());
        set.push(Gaussian {
            mean: *m,
            log_scale: [0.5 * mean_d2.ln(); 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(0.1),
            color,
        });
    }
    set
}

/// Radius of the bounding sphere of `set`'s means about their centroid.
pub fn scene_extent(set: &GaussianSet) -> f64 {
    if set.is_empty() {
        return 1.0;
    }
    let n = set.len() as f64;
    let c = set.means.iter().fold(Vector3::zeros(), |a, m| a + Vector3::from(*m)) / n;
    set.means.iter().map(|m| (Vector3::from(*m) - c).norm()).fold(0.0, f64::max).max(1e-6)
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub ground_truth: GaussianSet,
    pub cameras: Vec<Camera>,
    pub targets: Vec<Image>,
    pub train_views: Vec<usize>,
    pub test_views: Vec<usize>,
    pub initial: GaussianSet,
    pub extent: f64,
}

impl SyntheticScene {
    pub fn generate(spec: &SceneSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ground_truth = random_gaussians(&mut rng, spec.gt_count, spec.scale_range);
        let focal = spec.focal_factor * spec.width as f64;
        let cameras = fibonacci_cameras(spec.views, spec.camera_distance, focal, (spec.width, spec.height))?;
        let settings = RenderSettings::default();
        let targets = cameras
            .iter()
            .map(|c| render_forward(&ground_truth, c, spec.background, &settings).map(|o| o.image))
            .collect::<Result<Vec<_>>>()?;
        let (test_views, train_views): (Vec<usize>, Vec<usize>) =
            (0..spec.views).partition(|i| i % spec.test_every == 0);
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        init_rng.set_stream(1);
        let initial = initial_gaussians(&mut init_rng, spec.init_count);
        let extent = scene_extent(&initial);
        Ok(Self { spec: spec.clone(), ground_truth, cameras, targets, train_views, test_views, initial, extent })
    }
}
