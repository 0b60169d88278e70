//! 8-bit sRGB PNG IO. Images are linear-light in memory.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use super::Image;
use crate::error::{Result, SplatError};

pub fn linear_to_srgb(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.003_130_8 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn to_rgb8(img: &Image) -> RgbImage {
    ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
        let p = img.pixel(x as usize, y as usize);
        Rgb(p.map(|c| (linear_to_srgb(c) * 255.0).round() as u8))
    })
}

pub fn from_rgb8(img: &RgbImage) -> Image {
    let mut out = Image::new(img.width() as usize, img.height() as usize);
    for (x, y, p) in img.enumerate_pixels() {
        out.set_pixel(x as usize, y as usize, p.0.map(|c| srgb_to_linear(c as f64 / 255.0)));
    }
    out
}

pub fn save_png(img: &Image, path: &Path) -> Result<()> {
    to_rgb8(img)
        .save(path)
        .map_err(|source| SplatError::Image { path: path.to_path_buf(), source })
}

pub fn load_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|source| SplatError::Image { path: path.to_path_buf(), source })?;
    Ok(from_rgb8(&img.to_rgb8()))
}
