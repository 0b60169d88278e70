use rayon::prelude::*;

use super::project::{project, Projected2D};
use super::{Image, RenderSettings};
use crate::error::{Result, SplatError};
use crate::model::{Camera, GaussianSet};

/// Everything one forward pass produces.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: Image,
    /// Number of blended (non-skipped) primitives per pixel.
    pub blend_counts: Vec<u32>,
    /// Transmittance after the last blended primitive, per pixel.
    pub final_transmittance: Vec<f64>,
    /// Per primitive, the number of pixels it was blended into.
    pub per_gaussian_hits: Vec<u64>,
    /// Per primitive, `Σ α·T` over the pixels it was blended into.
    pub blend_weights: Vec<f64>,
    /// Projected primitives in blend order, `(depth, index)` ascending.
    pub projected: Vec<Projected2D>,
    pub background: [f64; 3],
    pub settings: RenderSettings,
    pub(crate) bins: TileBins,
}

impl RenderOutput {
    pub fn total_blends(&self) -> u64 {
        self.blend_counts.iter().map(|&c| c as u64).sum()
    }

    pub fn gaussian_count(&self) -> usize {
        self.per_gaussian_hits.len()
    }

    /// Primitives that survived projection and culling in this view.
    pub fn visible_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.gaussian_count()];
        for p in &self.projected {
            m[p.gaussian_index] = true;
        }
        m
    }
}

#[derive(Debug, Clone)]
pub(crate) struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    /// Per tile, indices into `projected`, in blend order.
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    fn build(projected: &[Projected2D], width: usize, height: usize, tile_size: usize) -> Self {
        let tiles_x = width.div_ceil(tile_size);
        let tiles_y = height.div_ceil(tile_size);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for (k, p) in projected.iter().enumerate() {
            let [x0, y0, x1, y1] = p.support;
            if x0 >= x1 || y0 >= y1 {
                continue;
            }
            for ty in y0 / tile_size..=(y1 - 1) / tile_size {
                for tx in x0 / tile_size..=(x1 - 1) / tile_size {
                    lists[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Self { tile_size, tiles_x, lists }
    }

    pub fn tile_rect(&self, tile: usize, width: usize, height: usize) -> [usize; 4] {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        [x0, y0, (x0 + self.tile_size).min(width), (y0 + self.tile_size).min(height)]
    }
}

/// Tile-local copy of the per-primitive data the pixel loop touches.
pub(crate) struct TileSplats {
    pub mean: Vec<[f64; 2]>,
    pub conic: Vec<[f64; 3]>,
    pub opacity: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub rect: Vec<[usize; 4]>,
    /// `ln(alpha_min / opacity)`: below this exponent the contribution is skipped.
    pub min_power: Vec<f64>,
}

impl TileSplats {
    pub fn gather(projected: &[Projected2D], list: &[u32], settings: &RenderSettings) -> Self {
        let n = list.len();
        let mut s = Self {
            mean: Vec::with_capacity(n),
            conic: Vec::with_capacity(n),
            opacity: Vec::with_capacity(n),
            color: Vec::with_capacity(n),
            rect: Vec::with_capacity(n),
            min_power: Vec::with_capacity(n),
        };
        for &k in list {
            let p = &projected[k as usize];
            s.mean.push(p.mean2d);
            s.conic.push(p.conic);
            s.opacity.push(p.opacity);
            s.color.push(p.color);
            s.rect.push(p.support);
            s.min_power.push((settings.alpha_min / p.opacity).ln() - 1e-9);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    /// Fills `out` with the splats whose support covers row `y`, in blend order.
    pub fn row_candidates(&self, y: usize, out: &mut Vec<usize>) {
        out.clear();
        out.extend((0..self.len()).filter(|&k| self.rect[k][1] <= y && y < self.rect[k][3]));
    }

    /// Evaluates primitive `k` at a pixel. Returns `(α, G, clamped)` or `None`
    /// when the primitive does not touch the pixel or is skipped.
    #[inline]
    pub fn alpha_at(&self, k: usize, x: usize, y: usize, settings: &RenderSettings) -> Option<(f64, f64, bool)> {
        let r = self.rect[k];
        if x < r[0] || x >= r[2] || y < r[1] || y >= r[3] {
            return None;
        }
        let dx = self.mean[k][0] - (x as f64 + 0.5);
        let dy = self.mean[k][1] - (y as f64 + 0.5);
        let [a, b, c] = self.conic[k];
        let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
        if power < self.min_power[k] {
            return None;
        }
        let g = power.exp();
        let raw = self.opacity[k] * g;
        if raw < settings.alpha_min {
            return None;
        }
        if raw > settings.alpha_max {
            Some((settings.alpha_max, g, true))
        } else {
            Some((raw, g, false))
        }
    }
}

struct TileForward {
    rgb: Vec<[f64; 3]>,
    counts: Vec<u32>,
    transmittance: Vec<f64>,
    hits: Vec<u32>,
    weights: Vec<f64>,
}

fn forward_tile(
    bins: &TileBins,
    tile: usize,
    projected: &[Projected2D],
    cam: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> TileForward {
    let list = &bins.lists[tile];
    let splats = TileSplats::gather(projected, list, settings);
    let [x0, y0, x1, y1] = bins.tile_rect(tile, cam.width, cam.height);
    let npx = (x1 - x0) * (y1 - y0);
    let mut out = TileForward {
        rgb: Vec::with_capacity(npx),
        counts: Vec::with_capacity(npx),
        transmittance: Vec::with_capacity(npx),
        hits: vec![0; splats.len()],
        weights: vec![0.0; splats.len()],
    };
    let mut row = Vec::with_capacity(splats.len());
    for y in y0..y1 {
        splats.row_candidates(y, &mut row);
        for x in x0..x1 {
            let mut t = 1.0f64;
            let mut c = [0.0f64; 3];
            let mut n = 0u32;
            for &k in &row {
                let Some((alpha, _, _)) = splats.alpha_at(k, x, y, settings) else { continue };
                let w = alpha * t;
                let col = splats.color[k];
                c[0] += col[0] * w;
                c[1] += col[1] * w;
                c[2] += col[2] * w;
                out.hits[k] += 1;
                out.weights[k] += w;
                n += 1;
                t *= 1.0 - alpha;
                if t < settings.t_saturation {
                    break;
                }
            }
            for ch in 0..3 {
                c[ch] += t * background[ch];
            }
            out.rgb.push(c);
            out.counts.push(n);
            out.transmittance.push(t);
        }
    }
    out
}

/// Renders every primitive of `set`.
pub fn render_forward(
    set: &GaussianSet,
    cam: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    render_forward_masked(set, cam, background, settings, None)
}

/// Renders only the rows whose `active` flag is set; the others behave as if
/// absent (no pixels, no hits).
pub fn render_forward_masked(
    set: &GaussianSet,
    cam: &Camera,
    background: [f64; 3],
    settings: &RenderSettings,
    active: Option<&[bool]>,
) -> Result<RenderOutput> {
    if let Some(m) = active {
        if m.len() != set.len() {
            return Err(SplatError::Dimension(format!(
                "active mask has {} entries for {} primitives",
                m.len(),
                set.len()
            )));
        }
    }
    if settings.tile_size == 0 {
        return Err(SplatError::InvalidArgument("tile_size must be positive".into()));
    }
    let mut projected = project(set, cam, settings, active)?;
    projected.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .expect("finite depth")
            .then(a.gaussian_index.cmp(&b.gaussian_index))
    });
    let bins = TileBins::build(&projected, cam.width, cam.height, settings.tile_size);
    let n_tiles = bins.lists.len();
    let run = |tile: usize| forward_tile(&bins, tile, &projected, cam, background, settings);
    let tiles: Vec<TileForward> = if settings.parallel {
        (0..n_tiles).into_par_iter().map(run).collect()
    } else {
        (0..n_tiles).map(run).collect()
    };

    let (w, h) = (cam.width, cam.height);
    let mut image = Image::new(w, h);
    let mut blend_counts = vec![0u32; w * h];
    let mut final_transmittance = vec![0.0; w * h];
    let mut per_gaussian_hits = vec![0u64; set.len()];
    let mut blend_weights = vec![0.0; set.len()];
    for (tile, tf) in tiles.into_iter().enumerate() {
        let [x0, y0, x1, y1] = bins.tile_rect(tile, w, h);
        let mut p = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                image.set_pixel(x, y, tf.rgb[p]);
                blend_counts[y * w + x] = tf.counts[p];
                final_transmittance[y * w + x] = tf.transmittance[p];
                p += 1;
            }
        }
        for (k, &pk) in bins.lists[tile].iter().enumerate() {
            let gi = projected[pk as usize].gaussian_index;
            per_gaussian_hits[gi] += tf.hits[k] as u64;
            blend_weights[gi] += tf.weights[k];
        }
    }
    Ok(RenderOutput {
        image,
        blend_counts,
        final_transmittance,
        per_gaussian_hits,
        blend_weights,
        projected,
        background,
        settings: *settings,
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{logit, Gaussian};
    use approx::assert_relative_eq;
    use nalgebra::{Matrix3, Vector3};

    fn cam(w: usize, h: usize) -> Camera {
        Camera::new(
            (100.0, 100.0),
            (w as f64 / 2.0, h as f64 / 2.0),
            (w, h),
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    /// A primitive centred on pixel (8, 8) of a 16×16 camera, tiny so that only
    /// that pixel sees it.
    fn on_pixel(depth: f64, opacity: f64, color: [f64; 3]) -> Gaussian {
        // pixel center 8.5 maps back to x = 0.5 * depth / fx
        Gaussian {
            mean: [0.5 * depth / 100.0, 0.5 * depth / 100.0, depth],
            log_scale: [-12.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(opacity),
            color,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let out = render_forward(&GaussianSet::default(), &cam(16, 12), [0.3; 3], &RenderSettings::default()).unwrap();
        assert!(out.image.data.iter().all(|&v| v == 0.3));
        assert!(out.blend_counts.iter().all(|&c| c == 0));
        assert!(out.final_transmittance.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn single_primitive_on_pixel_center() {
        let set = GaussianSet::from_rows([on_pixel(1.0, 0.5, [1.0, 0.0, 0.0])]);
        let out = render_forward(&set, &cam(16, 16), [0.0; 3], &RenderSettings::default()).unwrap();
        let px = out.image.pixel(8, 8);
        assert_relative_eq!(px[0], 0.5, epsilon = 1e-12);
        assert_eq!(px[1], 0.0);
        assert_relative_eq!(out.final_transmittance[8 * 16 + 8], 0.5, epsilon = 1e-12);
        assert_eq!(out.blend_counts[8 * 16 + 8], 1);
        // the 0.3 px² floor spreads it over a few neighbours as well
        let touched = out.blend_counts.iter().filter(|&&c| c > 0).count() as u64;
        assert_eq!(out.per_gaussian_hits[0], touched);
        let coverage: f64 = out.final_transmittance.iter().map(|t| 1.0 - t).sum();
        assert_relative_eq!(out.blend_weights[0], coverage, epsilon = 1e-12);
    }

    #[test]
    fn two_coincident_primitives() {
        let set = GaussianSet::from_rows([
            on_pixel(1.0, 0.5, [1.0, 1.0, 1.0]),
            on_pixel(1.5, 0.5, [0.0, 0.0, 0.0]),
        ]);
        let out = render_forward(&set, &cam(16, 16), [0.0; 3], &RenderSettings::default()).unwrap();
        for ch in out.image.pixel(8, 8) {
            assert_relative_eq!(ch, 0.5, epsilon = 1e-12);
        }
        assert_relative_eq!(out.final_transmittance[8 * 16 + 8], 0.25, epsilon = 1e-12);
        assert_eq!(out.blend_counts[8 * 16 + 8], 2);
    }

    #[test]
    fn depth_ties_break_by_index() {
        let set = GaussianSet::from_rows([
            on_pixel(1.0, 0.5, [1.0, 0.0, 0.0]),
            on_pixel(1.0, 0.5, [0.0, 1.0, 0.0]),
        ]);
        let out = render_forward(&set, &cam(16, 16), [0.0; 3], &RenderSettings::default()).unwrap();
        let px = out.image.pixel(8, 8);
        assert_relative_eq!(px[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(px[1], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn saturation_stops_blending() {
        let rows: Vec<_> = (0..10).map(|k| on_pixel(1.0 + k as f64, 0.8, [1.0; 3])).collect();
        let out = render_forward(&GaussianSet::from_rows(rows), &cam(16, 16), [0.0; 3], &RenderSettings::default())
            .unwrap();
        // 0.2^5 = 3.2e-4 is above the threshold, 0.2^6 = 6.4e-5 is below
        assert_eq!(out.blend_counts[8 * 16 + 8], 6);
        assert!(out.final_transmittance[8 * 16 + 8] <= 1e-4);
    }

    #[test]
    fn alpha_is_clamped() {
        let set = GaussianSet::from_rows([on_pixel(1.0, 0.999, [1.0; 3])]);
        let out = render_forward(&set, &cam(16, 16), [0.0; 3], &RenderSettings::default()).unwrap();
        assert_relative_eq!(out.final_transmittance[8 * 16 + 8], 0.01, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_reports_index() {
        let mut set = GaussianSet::from_rows([on_pixel(1.0, 0.5, [1.0; 3]), on_pixel(1.0, 0.5, [1.0; 3])]);
        set.colors[1][2] = f64::INFINITY;
        let err = render_forward(&set, &cam(16, 16), [0.0; 3], &RenderSettings::default()).unwrap_err();
        assert!(matches!(err, SplatError::NonFinite { index: 1, .. }));
    }

    #[test]
    fn masked_rows_do_not_render() {
        let set = GaussianSet::from_rows([on_pixel(1.0, 0.5, [1.0; 3]), on_pixel(2.0, 0.5, [1.0; 3])]);
        let out = render_forward_masked(&set, &cam(16, 16), [0.0; 3], &RenderSettings::default(), Some(&[false, true]))
            .unwrap();
        assert_eq!(out.per_gaussian_hits[0], 0);
        assert!(out.per_gaussian_hits[1] > 0);
        assert_eq!(out.visible_mask(), vec![false, true]);
        assert!(render_forward_masked(&set, &cam(16, 16), [0.0; 3], &RenderSettings::default(), Some(&[true]))
            .is_err());
    }
}
