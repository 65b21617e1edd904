//! Procedural images for tests, benchmarks and demos.
//!
//! Everything is a pure function of its arguments; the noise comes from
//! [`SplitMix64`] so outputs never change between releases of a dependency.

use std::f64::consts::PI;

use crate::imaging::{GrayImage, RgbImage};
use crate::rng::SplitMix64;

/// Light studio backdrop used by [`leaf`].
pub const BACKDROP: [u8; 3] = [214, 214, 208];

/// A leaf on a plain backdrop. The class selects the blemish pattern:
/// 0 plain with veins, 1 brown spots, 2 yellow blotches (and any further id
/// cycles through the three with a hue shift).
pub fn leaf(width: usize, height: usize, class: usize, seed: u64) -> RgbImage {
    let mut rng = SplitMix64::new(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut unit = move || rng.next_f64();
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = (w * (0.45 + 0.1 * unit()), h * (0.45 + 0.1 * unit()));
    let (a, b) = (w.min(h) * (0.30 + 0.06 * unit()), w.min(h) * (0.17 + 0.05 * unit()));
    let theta = PI * unit();
    let (ct, st) = (theta.cos(), theta.sin());
    let shift = (class / 3) as f64 * 25.0;
    let base = [40.0 + 25.0 * unit() + shift, 115.0 + 30.0 * unit(), 35.0 + 20.0 * unit()];

    let blemishes: Vec<(f64, f64, f64)> = (0..6 + (unit() * 6.0) as usize)
        .map(|_| {
            let (r, t) = (unit().sqrt() * 0.75, 2.0 * PI * unit());
            let radius = match class % 3 {
                1 => 1.5 + 2.5 * unit(),
                _ => 3.0 + 4.0 * unit(),
            };
            (r * t.cos() * a, r * t.sin() * b, radius)
        })
        .collect();

    let noise: Vec<f64> = (0..width * height).map(|_| unit() - 0.5).collect();
    RgbImage::from_fn(width, height, |x, y| {
        let n = noise[y * width + x];
        let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
        let (u, v) = (dx * ct + dy * st, -dx * st + dy * ct);
        if (u / a).powi(2) + (v / b).powi(2) > 1.0 {
            return BACKDROP.map(|c| (c as f64 + 6.0 * n).round().clamp(0.0, 255.0) as u8);
        }
        let mut rgb = base;
        let vein = (v.abs() < 0.8) || ((u * 0.35).sin().abs() < 0.08 && v.abs() < b * 0.8);
        let in_blemish = blemishes.iter().any(|&(bu, bv, r)| (u - bu).powi(2) + (v - bv).powi(2) < r * r);
        match class % 3 {
            0 if vein => rgb = [rgb[0] + 35.0, rgb[1] + 45.0, rgb[2] + 25.0],
            1 if in_blemish => rgb = [115.0, 72.0, 30.0],
            2 if in_blemish => rgb = [185.0, 175.0, 55.0],
            _ => {}
        }
        rgb.map(|c| (c + 16.0 * n).round().clamp(0.0, 255.0) as u8)
    })
}

/// Grayscale scene of random elongated Gaussian blobs and bright rectangles
/// on a mid-gray field, values in [0, 1]. Rich in corners and blobs at
/// several scales, and varied enough that descriptors are distinctive,
/// which makes it a good keypoint fixture.
pub fn blob_scene(size: usize, seed: u64) -> GrayImage {
    let mut rng = SplitMix64::new(seed);
    let s = size as f64;
    // (cx, cy, inverse covariance terms a, b, c, amplitude)
    let blobs: Vec<[f64; 6]> = (0..14)
        .map(|_| {
            let (cx, cy) = (s * (0.1 + 0.8 * rng.next_f64()), s * (0.1 + 0.8 * rng.next_f64()));
            let major = s * (0.015 + 0.05 * rng.next_f64());
            let minor = major / (1.0 + 1.5 * rng.next_f64());
            let theta = PI * rng.next_f64();
            let (ct, st) = (theta.cos(), theta.sin());
            let (ia, ib) = (1.0 / (major * major), 1.0 / (minor * minor));
            let sign = if rng.next_u64().is_multiple_of(2) { 1.0 } else { -1.0 };
            let amp = sign * (0.15 + 0.25 * rng.next_f64());
            [cx, cy, ia * ct * ct + ib * st * st, (ia - ib) * ct * st, ia * st * st + ib * ct * ct, amp]
        })
        .collect();
    let rects: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let (x0, y0) = (s * 0.8 * rng.next_f64(), s * 0.8 * rng.next_f64());
            (x0, y0, x0 + s * (0.06 + 0.12 * rng.next_f64()), y0 + s * (0.06 + 0.12 * rng.next_f64()))
        })
        .collect();
    GrayImage::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let mut v = 0.5;
        for &[bx, by, a, b, c, amp] in &blobs {
            let (dx, dy) = (px - bx, py - by);
            v += amp * (-0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy)).exp();
        }
        if rects.iter().any(|&(x0, y0, x1, y1)| px >= x0 && px < x1 && py >= y0 && py < y1) {
            v += 0.25;
        }
        v.clamp(0.0, 1.0) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{remove_background, SegmentationConfig};

    #[test]
    fn leaf_is_deterministic_and_separable_from_backdrop() {
        let img = leaf(80, 64, 1, 3);
        assert_eq!(img, leaf(80, 64, 1, 3));
        assert_ne!(img, leaf(80, 64, 2, 3));
        let (_, mask) = remove_background(&img, &SegmentationConfig::default()).unwrap();
        let fg = mask.foreground_count() as f64 / (80.0 * 64.0);
        assert!((0.1..0.6).contains(&fg), "foreground fraction {fg}");
        assert!(!mask.get(0, 0));
        assert!(mask.get(40, 32) || mask.get(36, 28));
    }

    #[test]
    fn blob_scene_in_range() {
        let g = blob_scene(64, 5);
        assert!(g.values().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(g.values().iter().any(|&v| v != g.values()[0]));
    }
}
