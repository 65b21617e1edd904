//! Studio-background removal: pixels connected to the image border through
//! background-colored pixels are rewritten to black.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, RgbImage};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationConfig {
    /// Euclidean RGB distance (8-bit units) at or below which a pixel
    /// matches the background color.
    pub color_tolerance: f64,
    /// Width of the border band sampled to estimate the background color.
    pub border_margin: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        Self { color_tolerance: 40.0, border_margin: 2 }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.color_tolerance >= 0.0) {
            return Err(Error::Config("segmentation.color_tolerance must be >= 0".into()));
        }
        if self.border_margin < 1 {
            return Err(Error::Config("segmentation.border_margin must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-channel median over the border band. With an even sample count the
/// lower of the two middle values is taken.
pub fn estimate_background_color(img: &RgbImage, cfg: &SegmentationConfig) -> Result<[u8; 3]> {
    let m = cfg.border_margin;
    let (w, h) = (img.width(), img.height());
    if w < 2 * m + 1 || h < 2 * m + 1 {
        return Err(Error::DimensionTooSmall(format!(
            "{w}x{h} image with border margin {m}"
        )));
    }
    let mut channels: [Vec<u8>; 3] = Default::default();
    for y in 0..h {
        for x in 0..w {
            if x < m || y < m || x >= w - m || y >= h - m {
                let p = img.get(x, y);
                for c in 0..3 {
                    channels[c].push(p[c]);
                }
            }
        }
    }
    let mut out = [0u8; 3];
    for (c, values) in channels.iter_mut().enumerate() {
        values.sort_unstable();
        out[c] = values[(values.len() - 1) / 2];
    }
    Ok(out)
}

#[inline]
fn within_tolerance(p: [u8; 3], bg: [u8; 3], tol_sq: f64) -> bool {
    let d2: i32 = (0..3).map(|c| (p[c] as i32 - bg[c] as i32).pow(2)).sum();
    d2 as f64 <= tol_sq
}

/// Foreground mask (true = leaf). Background is everything reachable by a
/// 4-connected fill from background-colored border pixels.
pub fn compute_background_mask(img: &RgbImage, cfg: &SegmentationConfig) -> Result<BinaryMask> {
    let bg = estimate_background_color(img, cfg)?;
    let tol_sq = cfg.color_tolerance * cfg.color_tolerance;
    let (w, h) = (img.width(), img.height());
    let mut background = vec![false; w * h];
    let mut queue = VecDeque::new();

    let mut seed = |x: usize, y: usize, queue: &mut VecDeque<(usize, usize)>| {
        let i = y * w + x;
        if !background[i] && within_tolerance(img.get(x, y), bg, tol_sq) {
            background[i] = true;
            queue.push_back((x, y));
        }
    };
    for x in 0..w {
        seed(x, 0, &mut queue);
        seed(x, h - 1, &mut queue);
    }
    for y in 0..h {
        seed(0, y, &mut queue);
        seed(w - 1, y, &mut queue);
    }

    while let Some((x, y)) = queue.pop_front() {
        let neighbours = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for (nx, ny) in neighbours {
            if nx >= w || ny >= h {
                continue;
            }
            let i = ny * w + nx;
            if !background[i] && within_tolerance(img.get(nx, ny), bg, tol_sq) {
                background[i] = true;
                queue.push_back((nx, ny));
            }
        }
    }

    BinaryMask::new(w, h, background.into_iter().map(|b| !b).collect())
}

/// Copies foreground pixels and paints background pixels `[0, 0, 0]`.
pub fn apply_mask(img: &RgbImage, mask: &BinaryMask) -> Result<RgbImage> {
    if (img.width(), img.height()) != (mask.width(), mask.height()) {
        return Err(Error::DimensionMismatch(format!(
            "image {}x{} vs mask {}x{}",
            img.width(),
            img.height(),
            mask.width(),
            mask.height()
        )));
    }
    let pixels = img
        .pixels()
        .iter()
        .zip(mask.flags())
        .map(|(&p, &fg)| if fg { p } else { [0, 0, 0] })
        .collect();
    RgbImage::new(img.width(), img.height(), pixels)
}

/// Mask computation followed by masking.
pub fn remove_background(img: &RgbImage, cfg: &SegmentationConfig) -> Result<(RgbImage, BinaryMask)> {
    let mask = compute_background_mask(img, cfg)?;
    Ok((apply_mask(img, &mask)?, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    const WHITE: [u8; 3] = [255, 255, 255];
    const GREEN: [u8; 3] = [40, 160, 50];

    fn disk(size: usize, r: f64) -> RgbImage {
        let c = (size as f64 - 1.0) / 2.0;
        RgbImage::from_fn(size, size, |x, y| {
            if (x as f64 - c).hypot(y as f64 - c) <= r {
                GREEN
            } else {
                WHITE
            }
        })
    }

    #[test]
    fn uniform_gray_background() {
        let img = RgbImage::filled(9, 7, [128, 128, 128]);
        let cfg = SegmentationConfig::default();
        assert_eq!(estimate_background_color(&img, &cfg).unwrap(), [128, 128, 128]);
        assert_eq!(compute_background_mask(&img, &cfg).unwrap().foreground_count(), 0);
    }

    #[test]
    fn center_excluded_from_estimate() {
        let img = RgbImage::from_fn(10, 10, |x, y| {
            if (2..8).contains(&x) && (2..8).contains(&y) {
                GREEN
            } else {
                WHITE
            }
        });
        assert_eq!(estimate_background_color(&img, &SegmentationConfig::default()).unwrap(), WHITE);
    }

    #[test]
    fn mixed_border_median_by_sorting() {
        let mut rng = crate::rng::SplitMix64::new(17);
        let img = RgbImage::from_fn(8, 8, |_, _| {
            let v = rng.next_u64();
            [v as u8, (v >> 8) as u8, (v >> 16) as u8]
        });
        let cfg = SegmentationConfig { color_tolerance: 40.0, border_margin: 2 };
        // Brute force: collect the band by coordinates, sort each channel.
        let mut band = Vec::new();
        for y in 0..8 {
            for x in 0..8 {
                if !((2..6).contains(&x) && (2..6).contains(&y)) {
                    band.push(img.get(x, y));
                }
            }
        }
        assert_eq!(band.len(), 48);
        let mut expected = [0u8; 3];
        for c in 0..3 {
            let mut v: Vec<u8> = band.iter().map(|p| p[c]).collect();
            v.sort();
            expected[c] = v[23];
        }
        assert_eq!(estimate_background_color(&img, &cfg).unwrap(), expected);
    }

    #[test]
    fn too_small_for_margin() {
        let img = RgbImage::filled(4, 9, WHITE);
        assert!(matches!(
            compute_background_mask(&img, &SegmentationConfig::default()),
            Err(Error::DimensionTooSmall(_))
        ));
    }

    #[test]
    fn disk_is_foreground() {
        let img = disk(31, 9.0);
        let mask = compute_background_mask(&img, &SegmentationConfig::default()).unwrap();
        for y in 0..31 {
            for x in 0..31 {
                assert_eq!(mask.get(x, y), img.get(x, y) == GREEN);
            }
        }
    }

    #[test]
    fn enclosed_background_colored_pixel_stays_foreground() {
        let img = RgbImage::from_fn(11, 11, |x, y| {
            let d = (x as i32 - 5).abs().max((y as i32 - 5).abs());
            if d == 1 || d == 2 {
                GREEN
            } else {
                WHITE
            }
        });
        let mask = compute_background_mask(&img, &SegmentationConfig::default()).unwrap();
        assert!(mask.get(5, 5), "enclosed white pixel must not be background");
        assert!(!mask.get(0, 0));
        assert_eq!(mask.foreground_count(), 25);
    }

    #[test]
    fn apply_mask_rules() {
        let img = RgbImage::from_fn(4, 4, |x, y| [x as u8 + 1, y as u8 + 1, 9]);
        assert_eq!(apply_mask(&img, &BinaryMask::filled(4, 4, true)).unwrap(), img);
        let black = apply_mask(&img, &BinaryMask::filled(4, 4, false)).unwrap();
        assert!(black.pixels().iter().all(|&p| p == [0, 0, 0]));

        let flags: Vec<bool> = (0..16).map(|i| (i * 7) % 3 == 0).collect();
        let mask = BinaryMask::new(4, 4, flags).unwrap();
        let out = apply_mask(&img, &mask).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let want = if mask.get(x, y) { img.get(x, y) } else { [0, 0, 0] };
                assert_eq!(out.get(x, y), want);
            }
        }
        assert_eq!(apply_mask(&out, &mask).unwrap(), out);
        assert!(matches!(
            apply_mask(&img, &BinaryMask::filled(3, 4, true)),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
