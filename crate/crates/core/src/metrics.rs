//! Photometric loss `(1 − λ)·L1 + λ·(1 − SSIM)` with its image gradient, and
//! evaluation metrics.
//!
//! SSIM uses an 11-tap Gaussian window (σ = 1.5) applied separably per channel
//! with zero padding, and the usual constants `C1 = 0.01²`, `C2 = 0.03²`.

use crate::error::{Result, SplatError};
use crate::render::Image;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn window() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut w = [0.0; WINDOW];
    for (k, v) in w.iter_mut().enumerate() {
        let d = k as f64 - half;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Zero-padded separable blur of one `w × h` plane. The kernel is symmetric,
/// so this operator is its own adjoint.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let r = WINDOW / 2;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let mut acc = 0.0;
            for (xx, v) in row.iter().enumerate().take(hi + 1).skip(lo) {
                acc += k[xx + r - x] * v;
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for yy in lo..=hi {
            let kv = k[yy + r - y];
            let src = &tmp[yy * w..(yy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += kv * s;
            }
        }
    }
    out
}

fn planes(img: &Image) -> [Vec<f64>; 3] {
    let n = img.width * img.height;
    let mut p = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (i, px) in img.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            p[c][i] = px[c];
        }
    }
    p
}

/// Blurred statistics of a fixed target image, reused across iterations.
#[derive(Debug, Clone)]
pub struct TargetStats {
    width: usize,
    height: usize,
    y: [Vec<f64>; 3],
    mu: [Vec<f64>; 3],
    /// Blurred `y²`.
    sq: [Vec<f64>; 3],
}

impl TargetStats {
    pub fn new(target: &Image) -> Self {
        let k = window();
        let (w, h) = (target.width, target.height);
        let y = planes(target);
        let mu = [0, 1, 2].map(|c| blur(&y[c], w, h, &k));
        let sq = [0, 1, 2].map(|c| {
            let s: Vec<f64> = y[c].iter().map(|v| v * v).collect();
            blur(&s, w, h, &k)
        });
        Self { width: w, height: h, y, mu, sq }
    }
}

/// Loss value, its parts, and `∂loss/∂image`.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub l1: f64,
    pub ssim: f64,
    pub grad: Image,
}

fn check_shape(a: &Image, w: usize, h: usize) -> Result<()> {
    if a.width != w || a.height != h || a.data.len() != w * h * 3 {
        return Err(SplatError::Dimension(format!(
            "image {}×{} does not match target {w}×{h}",
            a.width, a.height
        )));
    }
    Ok(())
}

/// SSIM and, when requested, its gradient with respect to `img`.
fn ssim_impl(img: &Image, t: &TargetStats, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let k = window();
    let (w, h) = (t.width, t.height);
    let n = w * h;
    let x = planes(img);
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; n * 3]);
    for c in 0..3 {
        let mux = blur(&x[c], w, h, &k);
        let xx: Vec<f64> = x[c].iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x[c].iter().zip(&t.y[c]).map(|(a, b)| a * b).collect();
        let sxx = blur(&xx, w, h, &k);
        let sxy = blur(&xy, w, h, &k);
        let (mut da, mut db, mut dc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for p in 0..n {
            let (mx, my) = (mux[p], t.mu[c][p]);
            let vx = sxx[p] - mx * mx;
            let vy = t.sq[c][p] - my * my;
            let cxy = sxy[p] - mx * my;
            let num1 = 2.0 * mx * my + C1;
            let num2 = 2.0 * cxy + C2;
            let den1 = mx * mx + my * my + C1;
            let den2 = vx + vy + C2;
            let s = num1 * num2 / (den1 * den2);
            total += s;
            if want_grad {
                let d_mu = 2.0 * my * num2 / (den1 * den2) - s * 2.0 * mx / den1;
                let d_vx = -s / den2;
                let d_cxy = 2.0 * num1 / (den1 * den2);
                da[p] = d_mu - 2.0 * mx * d_vx - my * d_cxy;
                db[p] = d_vx;
                dc[p] = d_cxy;
            }
        }
        if let Some(g) = grad.as_mut() {
            let ba = blur(&da, w, h, &k);
            let bb = blur(&db, w, h, &k);
            let bc = blur(&dc, w, h, &k);
            for p in 0..n {
                g[p * 3 + c] = ba[p] + 2.0 * x[c][p] * bb[p] + t.y[c][p] * bc[p];
            }
        }
    }
    let m = (n * 3) as f64;
    (total / m, grad.map(|g| g.into_iter().map(|v| v / m).collect()))
}

/// `(1 − λ)·L1 + λ·(1 − SSIM)` and its gradient. L1 uses the subgradient 0 at ties.
pub fn photometric_loss(img: &Image, target: &Image, stats: &TargetStats, lambda: f64) -> Result<LossEval> {
    check_shape(img, stats.width, stats.height)?;
    check_shape(target, stats.width, stats.height)?;
    let m = img.data.len() as f64;
    let mut l1 = 0.0;
    let mut grad = vec![0.0; img.data.len()];
    for (i, (a, b)) in img.data.iter().zip(&target.data).enumerate() {
        let d = a - b;
        l1 += d.abs();
        grad[i] = (1.0 - lambda) * d.signum() * (d != 0.0) as u8 as f64 / m;
    }
    l1 /= m;
    let (ssim, sg) = if lambda > 0.0 {
        let (s, g) = ssim_impl(img, stats, true);
        (s, g)
    } else {
        (ssim_impl(img, stats, false).0, None)
    };
    if let Some(sg) = sg {
        for (g, s) in grad.iter_mut().zip(sg) {
            *g -= lambda * s;
        }
    }
    Ok(LossEval {
        loss: (1.0 - lambda) * l1 + lambda * (1.0 - ssim),
        l1,
        ssim,
        grad: Image { width: img.width, height: img.height, data: grad },
    })
}

pub fn ssim(img: &Image, target: &Image) -> Result<f64> {
    check_shape(img, target.width, target.height)?;
    Ok(ssim_impl(img, &TargetStats::new(target), false).0)
}

/// PSNR in dB for images in `[0, 1]`; infinite for identical images.
pub fn psnr(img: &Image, target: &Image) -> Result<f64> {
    check_shape(img, target.width, target.height)?;
    let mse = img.data.iter().zip(&target.data).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / img.data.len() as f64;
    Ok(-10.0 * mse.log10())
}
