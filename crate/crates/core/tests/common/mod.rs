#![allow(dead_code)]

use groupsplat::grouping::{Scope, Strategy};
use groupsplat::harness::{TrainConfig, TrainOutcome};
use groupsplat::model::{logit, Gaussian};
use groupsplat::render::{render_backward, render_forward, Image, RenderSettings};
use groupsplat::scene::SceneSpec;
use groupsplat::{Camera, GaussianSet};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn axis_camera(w: usize, h: usize, focal: f64) -> Camera {
    Camera::new((focal, focal), (w as f64 / 2.0, h as f64 / 2.0), (w, h), Matrix3::identity(), Vector3::zeros())
        .unwrap()
}

/// Five broad, well-separated primitives whose footprints cover a 16×16 image
/// with α comfortably inside (1/255, 0.99) everywhere.
pub fn gradcheck_scene(seed: u64) -> (GaussianSet, Camera) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let focal = 20.0;
    let mut set = GaussianSet::default();
    for k in 0..5 {
        let z = 2.0 + 0.45 * k as f64;
        let sigma_px = rng.random_range(5.5..7.5);
        let base = (sigma_px * z / focal).ln();
        let off = |r: &mut ChaCha8Rng| r.random_range(-2.0..2.0) * z / focal;
        set.push(Gaussian {
            mean: [off(&mut rng), off(&mut rng), z],
            log_scale: [base + rng.random_range(-0.15..0.15), base + rng.random_range(-0.15..0.15), base],
            rotation: [1.0, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)],
            opacity_logit: logit(rng.random_range(0.3..0.7)),
            color: [rng.random(), rng.random(), rng.random()],
        });
    }
    (set, axis_camera(16, 16, focal))
}

pub fn weighted_loss(set: &GaussianSet, cam: &Camera, bg: [f64; 3], weights: &[f64]) -> f64 {
    let out = render_forward(set, cam, bg, &RenderSettings::default()).unwrap();
    out.image.data.iter().zip(weights).map(|(a, b)| a * b).sum()
}

pub struct GradCheck {
    pub worst: f64,
    pub worst_at: String,
    pub checked: usize,
}

/// Compares every raw-parameter gradient against central differences.
pub fn run_gradcheck(seed: u64, h: f64, floor: f64) -> GradCheck {
    let (set, cam) = gradcheck_scene(seed);
    let bg = [0.1, 0.2, 0.3];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let weights: Vec<f64> = (0..cam.pixel_count() * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let out = render_forward(&set, &cam, bg, &RenderSettings::default()).unwrap();
    let d_image = Image { width: cam.width, height: cam.height, data: weights.clone() };
    let g = render_backward(&set, &cam, &out, &d_image).unwrap();

    let mut res = GradCheck { worst: 0.0, worst_at: String::new(), checked: 0 };
    let mut check = |name: &str, i: usize, c: usize, analytic: f64, perturb: &dyn Fn(&mut GaussianSet, f64)| {
        let mut plus = set.clone();
        perturb(&mut plus, h);
        let mut minus = set.clone();
        perturb(&mut minus, -h);
        let fd = (weighted_loss(&plus, &cam, bg, &weights) - weighted_loss(&minus, &cam, bg, &weights)) / (2.0 * h);
        let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(floor);
        res.checked += 1;
        if rel > res.worst {
            res.worst = rel;
            res.worst_at = format!("{name}[{i}][{c}]: analytic {analytic:.6e} fd {fd:.6e}");
        }
    };
    for i in 0..set.len() {
        for c in 0..3 {
            check("mean", i, c, g.d_mean3d[i][c], &|s, d| s.means[i][c] += d);
            check("log_scale", i, c, g.d_log_scale[i][c], &|s, d| s.log_scales[i][c] += d);
            check("color", i, c, g.d_color[i][c], &|s, d| s.colors[i][c] += d);
        }
        for c in 0..4 {
            check("rotation", i, c, g.d_rotation[i][c], &|s, d| s.rotations[i][c] += d);
        }
        check("opacity_logit", i, 0, g.d_opacity[i], &|s, d| s.opacity_logits[i] += d);
    }
    res
}

/// A random scene of up to 30 primitives seen by a look-at camera, at most 32×32.
pub fn random_scene(seed: u64) -> (GaussianSet, Camera, [f64; 3]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=30);
    let mut set = GaussianSet::default();
    for _ in 0..n {
        let norm = |r: &mut ChaCha8Rng| r.random_range(-1.0..1.0);
        set.push(Gaussian {
            mean: [0; 3].map(|_| rng.random_range(-0.6..0.6)),
            log_scale: [0; 3].map(|_| rng.random_range(-4.0f64..-1.2)),
            rotation: [norm(&mut rng), norm(&mut rng), norm(&mut rng), norm(&mut rng)],
            opacity_logit: rng.random_range(-5.0..5.0),
            color: [rng.random(), rng.random(), rng.random()],
        });
    }
    let (w, h) = (rng.random_range(4..=32), rng.random_range(4..=32));
    let dir = Vector3::new(norm3(&mut rng), norm3(&mut rng), norm3(&mut rng)).normalize();
    let eye = dir * rng.random_range(1.5..3.0);
    let cam = Camera::look_at(eye, Vector3::zeros(), Vector3::y(), rng.random_range(15.0..40.0), (w, h)).unwrap();
    (set, cam, [rng.random(), rng.random(), rng.random()])
}

fn norm3(r: &mut ChaCha8Rng) -> f64 {
    r.random_range(-1.0..1.0) + 1e-3
}

/// Straight per-pixel evaluation of `C = Σ cᵢ αᵢ Tᵢ + T_N c_bg` over every
/// primitive, written without any of the renderer's machinery.
pub fn naive_render(set: &GaussianSet, cam: &Camera, bg: [f64; 3]) -> Vec<f64> {
    struct Splat {
        depth: f64,
        index: usize,
        u: f64,
        v: f64,
        inv: [f64; 3],
        rect: [f64; 4],
        o: f64,
        c: [f64; 3],
    }
    let mut splats = Vec::new();
    for i in 0..set.len() {
        let t = cam.rotation * Vector3::from(set.means[i]) + cam.translation;
        if t.z <= 0.01 {
            continue;
        }
        let q = set.rotations[i];
        let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        let r = Matrix3::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
            2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y),
        );
        let s = Matrix3::from_diagonal(&Vector3::from(set.log_scales[i].map(f64::exp)));
        let sigma = r * s * s * r.transpose();
        let j = nalgebra::Matrix2x3::new(
            cam.fx / t.z, 0.0, -cam.fx * t.x / (t.z * t.z),
            0.0, cam.fy / t.z, -cam.fy * t.y / (t.z * t.z),
        );
        let m = j * cam.rotation;
        let cov = m * sigma * m.transpose();
        let (a, b, c) = (cov[(0, 0)] + 0.3, cov[(0, 1)], cov[(1, 1)] + 0.3);
        let det = a * c - b * b;
        if det <= 0.0 {
            continue;
        }
        let lambda = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
        let radius = (3.0 * lambda.sqrt()).ceil();
        let u = cam.fx * t.x / t.z + cam.cx;
        let v = cam.fy * t.y / t.z + cam.cy;
        splats.push(Splat {
            depth: t.z,
            index: i,
            u,
            v,
            inv: [c / det, -b / det, a / det],
            rect: [(u - radius).floor(), (v - radius).floor(), (u + radius).ceil(), (v + radius).ceil()],
            o: 1.0 / (1.0 + (-set.opacity_logits[i]).exp()),
            c: set.colors[i],
        });
    }
    splats.sort_by(|p, q| p.depth.total_cmp(&q.depth).then(p.index.cmp(&q.index)));
    let mut data = Vec::with_capacity(cam.width * cam.height * 3);
    for py in 0..cam.height {
        for px in 0..cam.width {
            let (fx, fy) = (px as f64, py as f64);
            let mut color = [0.0; 3];
            let mut t = 1.0;
            for s in &splats {
                if fx < s.rect[0] || fx >= s.rect[2] || fy < s.rect[1] || fy >= s.rect[3] {
                    continue;
                }
                let dx = s.u - (fx + 0.5);
                let dy = s.v - (fy + 0.5);
                let g = (-0.5 * (s.inv[0] * dx * dx + s.inv[2] * dy * dy) - s.inv[1] * dx * dy).exp();
                let alpha = (s.o * g).min(0.99);
                if alpha < 1.0 / 255.0 {
                    continue;
                }
                for ch in 0..3 {
                    color[ch] += s.c[ch] * alpha * t;
                }
                t *= 1.0 - alpha;
                if t < 1e-4 {
                    break;
                }
            }
            for ch in 0..3 {
                data.push(color[ch] + t * bg[ch]);
            }
        }
    }
    data
}

pub fn set_with_opacities(opacities: &[f64]) -> GaussianSet {
    GaussianSet::from_rows(opacities.iter().map(|&o| Gaussian {
        mean: [0.0; 3],
        log_scale: [-3.0; 3],
        rotation: [1.0, 0.0, 0.0, 0.0],
        opacity_logit: logit(o),
        color: [0.5; 3],
    }))
}

/// Exact inclusion probabilities of successive weighted draws without
/// replacement, by enumerating every ordered selection of `k` items.
pub fn inclusion_oracle(weights: &[f64], k: usize) -> Vec<f64> {
    fn walk(weights: &[f64], k: usize, taken: &mut Vec<usize>, p: f64, out: &mut [f64]) {
        if taken.len() == k {
            for &i in taken.iter() {
                out[i] += p;
            }
            return;
        }
        let rest: f64 = (0..weights.len()).filter(|i| !taken.contains(i)).map(|i| weights[i]).sum();
        for i in 0..weights.len() {
            if taken.contains(&i) {
                continue;
            }
            taken.push(i);
            walk(weights, k, taken, p * weights[i] / rest, out);
            taken.pop();
        }
    }
    let mut out = vec![0.0; weights.len()];
    walk(weights, k, &mut Vec::new(), 1.0, &mut out);
    out
}

/// Per-primitive inclusion frequency over `draws` OPS resamples keeping `k` rows.
pub fn ops_frequencies(opacities: &[f64], k: usize, draws: usize, seed: u64) -> Vec<f64> {
    use groupsplat::grouping::{resample, ImportanceState};
    let set = set_with_opacities(opacities);
    let n = opacities.len();
    // ⌈utr·n⌉ = k without floating-point round-up
    let utr = (k as f64 - 0.5) / n as f64;
    let importance = ImportanceState::new(n);
    let mut counts = vec![0usize; n];
    for d in 0..draws {
        let p = resample(&set, Strategy::Opacity, &importance, utr, seed, d).unwrap();
        assert_eq!(p.under_training_count(), k);
        for i in p.under_training() {
            counts[i] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// A short grouped run with randomized strategy, ratio, scope and toggles.
pub fn fuzz_config(rng: &mut ChaCha8Rng, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        iterations: 120,
        schedule_scale: 0.004,
        seed,
        check_exclusion: true,
        scene: SceneSpec { gt_count: 60, views: 6, width: 32, height: 32, init_count: 30, ..SceneSpec::default() },
        ..TrainConfig::default()
    };
    let g = &mut cfg.grouping;
    g.strategy = Strategy::ALL[rng.random_range(0..Strategy::ALL.len())];
    g.utr = rng.random_range(0.1..=1.0);
    g.scope = if rng.random_bool(0.5) { Scope::Full } else { Scope::DensifyOnly };
    g.cyclic_resample = rng.random_bool(0.8);
    g.global_densify = rng.random_bool(0.8);
    g.global_optimize = rng.random_bool(0.8);
    cfg.densify.grad_threshold = rng.random_range(2e-6..5e-5);
    cfg.densify.reset_cached = rng.random_bool(0.3);
    cfg
}

/// Checks the partition events of a run: normalized probabilities, exact
/// group sizes after resampling and full groups after merges.
pub fn check_partition_log(cfg: &TrainConfig, outcome: &TrainOutcome) -> Result<usize, String> {
    if outcome.partition.len() != outcome.model.len() {
        return Err("final partition does not cover the model".into());
    }
    for e in &outcome.metrics.partitions {
        if e.probability_error > 1e-12 {
            return Err(format!("probabilities off by {} at {}", e.probability_error, e.iteration));
        }
        let expected = if e.action == "resample" {
            ((cfg.grouping.utr * e.primitives as f64).ceil() as usize).min(e.primitives)
        } else {
            e.primitives
        };
        if e.under_training != expected {
            return Err(format!("{} at {}: {} under training, expected {expected}", e.action, e.iteration, e.under_training));
        }
    }
    if outcome.metrics.iterations.iter().any(|r| r.under_training > r.primitives) {
        return Err("under-training count exceeds the population".into());
    }
    Ok(outcome.metrics.partitions.len())
}
