//! Raster containers and the low-level image operations shared by every
//! later stage.

mod filter;
mod ppm;

pub use filter::{downsample2, gaussian_blur, gaussian_kernel, reflect101};
pub use ppm::{decode_image, decode_ppm, encode_ppm, read_image, write_ppm};

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionTooSmall(format!("{width}x{height} image")));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self { width, height, pixels: vec![rgb; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    /// Copies the `w`x`h` window whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::DimensionMismatch(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(Self::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Rotates by 90 degrees clockwise: new(x, y) = old(y, h - 1 - x).
    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |x, y| self.get(y, h - 1 - x))
    }

    /// ITU-R BT.601 luma scaled to [0, 1].
    pub fn to_grayscale(&self) -> GrayImage {
        let values = self
            .pixels
            .iter()
            .map(|&[r, g, b]| ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0) as f32)
            .collect();
        GrayImage { width: self.width, height: self.height, values }
    }

    /// Per-channel bilinear resize, rounding each channel back to 8 bits.
    pub fn resize_bilinear(&self, out_w: usize, out_h: usize) -> Self {
        assert!(out_w > 0 && out_h > 0, "empty output");
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        let xs = axis_taps(self.width, out_w);
        let ys = axis_taps(self.height, out_h);
        let mut pixels = Vec::with_capacity(out_w * out_h);
        for &(y0, y1, ty) in &ys {
            for &(x0, x1, tx) in &xs {
                let p00 = self.get(x0, y0);
                let p10 = self.get(x1, y0);
                let p01 = self.get(x0, y1);
                let p11 = self.get(x1, y1);
                let mut out = [0u8; 3];
                for c in 0..3 {
                    let top = p00[c] as f64 * (1.0 - tx) + p10[c] as f64 * tx;
                    let bottom = p01[c] as f64 * (1.0 - tx) + p11[c] as f64 * tx;
                    let v = top * (1.0 - ty) + bottom * ty;
                    out[c] = v.round().clamp(0.0, 255.0) as u8;
                }
                pixels.push(out);
            }
        }
        Self { width: out_w, height: out_h, pixels }
    }
}

/// Single-channel intensity raster with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::DimensionTooSmall(format!("{width}x{height} image")));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {width}x{height} image",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedFile("non-finite intensity".into()));
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self { width, height, values: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.values[y * self.width + x] = v;
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }

    pub fn rotate90(&self) -> Self {
        let (w, h) = (self.width, self.height);
        Self::from_fn(h, w, |x, y| self.get(y, h - 1 - x))
    }

    /// Bilinear resampling with half-pixel center alignment and edge clamping.
    pub fn resize_bilinear(&self, out_w: usize, out_h: usize) -> Self {
        assert!(out_w > 0 && out_h > 0, "empty output");
        if out_w == self.width && out_h == self.height {
            return self.clone();
        }
        let xs = axis_taps(self.width, out_w);
        let ys = axis_taps(self.height, out_h);
        let mut values = Vec::with_capacity(out_w * out_h);
        for &(y0, y1, ty) in &ys {
            for &(x0, x1, tx) in &xs {
                let top = self.get(x0, y0) as f64 * (1.0 - tx) + self.get(x1, y0) as f64 * tx;
                let bottom = self.get(x0, y1) as f64 * (1.0 - tx) + self.get(x1, y1) as f64 * tx;
                values.push((top * (1.0 - ty) + bottom * ty) as f32);
            }
        }
        Self { width: out_w, height: out_h, values }
    }

    pub fn max_abs_diff(&self, other: &GrayImage) -> f32 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// Per-pixel foreground flags; `true` marks foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    flags: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} flags for a {width}x{height} mask",
                flags.len()
            )));
        }
        Ok(Self { width, height, flags })
    }

    pub fn filled(width: usize, height: usize, foreground: bool) -> Self {
        Self { width, height, flags: vec![foreground; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.flags[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, foreground: bool) {
        self.flags[y * self.width + x] = foreground;
    }

    pub fn foreground_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// 3x3 (8-neighbour) dilation of the foreground.
    pub fn dilate(&self) -> Self {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Self::filled(self.width, self.height, false);
        for y in 0..h {
            for x in 0..w {
                let hit = (-1..=1).any(|dy| {
                    (-1..=1).any(|dx| {
                        let (nx, ny) = (x + dx, y + dy);
                        nx >= 0 && ny >= 0 && nx < w && ny < h && self.get(nx as usize, ny as usize)
                    })
                });
                out.set(x as usize, y as usize, hit);
            }
        }
        out
    }

    /// Renders foreground as white, background as black.
    pub fn to_rgb(&self) -> RgbImage {
        RgbImage::from_fn(self.width, self.height, |x, y| {
            if self.get(x, y) {
                [255, 255, 255]
            } else {
                [0, 0, 0]
            }
        })
    }
}

/// Source taps for one output axis: (lo, hi, weight of hi).
fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    let last = (n_in - 1) as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}
