use std::f64::consts::TAU;

use super::orientation::{gradient, wrap_angle};
use super::scale_space::ScaleSpace;
use super::Keypoint;

const CELLS: usize = 4;
const ORI_BINS: usize = 8;
pub const DESCRIPTOR_LEN: usize = CELLS * CELLS * ORI_BINS;
/// Cell width in units of the keypoint's octave sigma.
const CELL_SCALE: f64 = 3.0;
const CLAMP: f32 = 0.2;

/// 4x4 spatial cells x 8 orientation bins, L2 normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub [f32; DESCRIPTOR_LEN]);

impl Descriptor {
    pub fn distance_sq(&self, other: &Descriptor) -> f32 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn norm(&self) -> f32 {
        self.0.iter().map(|v| v * v).sum::<f32>().sqrt()
    }

    /// L2 normalize, clamp at 0.2, normalize again. An all-zero histogram
    /// stays zero.
    pub fn from_histogram(raw: &[f32; DESCRIPTOR_LEN]) -> Self {
        Self(clamp_normalize(raw).1)
    }
}

/// Returns the clamped (pre-renormalization) vector and the final one.
fn clamp_normalize(raw: &[f32; DESCRIPTOR_LEN]) -> ([f32; DESCRIPTOR_LEN], [f32; DESCRIPTOR_LEN]) {
    let norm = raw.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return ([0.0; DESCRIPTOR_LEN], [0.0; DESCRIPTOR_LEN]);
    }
    let mut clamped = [0f32; DESCRIPTOR_LEN];
    for (c, &v) in clamped.iter_mut().zip(raw) {
        *c = ((v as f64 / norm) as f32).min(CLAMP);
    }
    let norm2 = clamped.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
    let mut out = [0f32; DESCRIPTOR_LEN];
    for (o, &c) in out.iter_mut().zip(&clamped) {
        *o = (c as f64 / norm2) as f32;
    }
    (clamped, out)
}

/// Gradient histogram over the rotated window, trilinear binning.
fn raw_histogram(ss: &ScaleSpace, kp: &Keypoint) -> [f32; DESCRIPTOR_LEN] {
    let img = &ss.octaves[kp.octave][kp.layer];
    let (w, h) = (img.width() as i64, img.height() as i64);
    let cell = CELL_SCALE * kp.octave_scale;
    let half = CELLS as f64 / 2.0;
    let radius = ((cell * std::f64::consts::SQRT_2 * (CELLS as f64 + 1.0) * 0.5).round() as i64)
        .min(((w * w + h * h) as f64).sqrt() as i64);
    let (cos_t, sin_t) = (kp.orientation.cos() / cell, kp.orientation.sin() / cell);
    let (px, py) = (kp.octave_x.round() as i64, kp.octave_y.round() as i64);
    let weight_denom = 2.0 * half * half;

    let mut hist = [0f64; DESCRIPTOR_LEN];
    for dy in -radius..=radius {
        let y = py + dy;
        if y < 1 || y > h - 2 {
            continue;
        }
        for dx in -radius..=radius {
            let x = px + dx;
            if x < 1 || x > w - 2 {
                continue;
            }
            // Offset rotated into the keypoint frame, in cell units.
            let c_rot = dx as f64 * cos_t + dy as f64 * sin_t;
            let r_rot = -(dx as f64) * sin_t + dy as f64 * cos_t;
            let rbin = r_rot + half - 0.5;
            let cbin = c_rot + half - 0.5;
            if rbin <= -1.0 || rbin >= CELLS as f64 || cbin <= -1.0 || cbin >= CELLS as f64 {
                continue;
            }
            let (gx, gy) = gradient(img, x as usize, y as usize);
            let magnitude = gx.hypot(gy);
            if magnitude == 0.0 {
                continue;
            }
            let weight = (-(c_rot * c_rot + r_rot * r_rot) / weight_denom).exp();
            let theta = wrap_angle(gy.atan2(gx) - kp.orientation);
            let obin = theta * ORI_BINS as f64 / TAU;
            accumulate(&mut hist, rbin, cbin, obin, weight * magnitude);
        }
    }
    let mut out = [0f32; DESCRIPTOR_LEN];
    for (o, v) in out.iter_mut().zip(hist) {
        *o = v as f32;
    }
    out
}

fn accumulate(hist: &mut [f64; DESCRIPTOR_LEN], rbin: f64, cbin: f64, obin: f64, value: f64) {
    let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
    let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
    let (r0, c0, o0) = (r0 as i64, c0 as i64, o0 as i64);
    for (dr, wr) in [(0, 1.0 - fr), (1, fr)] {
        let r = r0 + dr;
        if !(0..CELLS as i64).contains(&r) {
            continue;
        }
        for (dc, wc) in [(0, 1.0 - fc), (1, fc)] {
            let c = c0 + dc;
            if !(0..CELLS as i64).contains(&c) {
                continue;
            }
            for (dor, wo) in [(0, 1.0 - fo), (1, fo)] {
                let o = (o0 + dor).rem_euclid(ORI_BINS as i64);
                let idx = (r as usize * CELLS + c as usize) * ORI_BINS + o as usize;
                hist[idx] += value * wr * wc * wo;
            }
        }
    }
}

pub fn compute_descriptor(ss: &ScaleSpace, kp: &Keypoint) -> Descriptor {
    Descriptor::from_histogram(&raw_histogram(ss, kp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;
    use crate::sift::{build_scale_space, compute_dog, detect_extrema, refine_keypoint, assign_orientations, SiftParams};

    fn features(img: &GrayImage) -> (ScaleSpace, Vec<Keypoint>) {
        let p = SiftParams::default();
        let ss = build_scale_space(img, &p).unwrap();
        let dog = compute_dog(&ss);
        let kps = detect_extrema(&dog, &p)
            .iter()
            .filter_map(|r| refine_keypoint(&dog, r, &p).ok())
            .flat_map(|k| assign_orientations(&ss, &k))
            .collect();
        (ss, kps)
    }

    fn textured(size: usize) -> GrayImage {
        let mut rng = crate::rng::SplitMix64::new(21);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..10)
            .map(|_| (6.0 + (size as f64 - 12.0) * rng.next_f64(), 6.0 + (size as f64 - 12.0) * rng.next_f64(), 1.5 + 3.0 * rng.next_f64(), rng.next_f64() - 0.5))
            .collect();
        GrayImage::from_fn(size, size, |x, y| {
            let v: f64 = blobs
                .iter()
                .map(|&(cx, cy, s, a)| a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            (0.5 + v).clamp(0.0, 1.0) as f32
        })
    }

    #[test]
    fn unit_norm_and_clamp() {
        let (ss, kps) = features(&textured(72));
        assert!(!kps.is_empty());
        for kp in &kps {
            let raw = raw_histogram(&ss, kp);
            let (clamped, fin) = clamp_normalize(&raw);
            assert!(clamped.iter().all(|&v| v <= CLAMP));
            let d = Descriptor(fin);
            assert!((d.norm() - 1.0).abs() < 1e-6, "{}", d.norm());
            assert_eq!(compute_descriptor(&ss, kp), d);
        }
    }

    #[test]
    fn zero_histogram_stays_zero() {
        let d = Descriptor::from_histogram(&[0.0; DESCRIPTOR_LEN]);
        assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn trilinear_weights_sum_to_value() {
        let mut hist = [0.0; DESCRIPTOR_LEN];
        accumulate(&mut hist, 1.3, 2.6, 7.4, 2.0);
        assert!((hist.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        // orientation wraps from bin 7 into bin 0
        let idx = (CELLS + 2) * ORI_BINS;
        assert!(hist[idx] > 0.0);
    }
}
