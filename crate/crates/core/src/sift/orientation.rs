use std::f64::consts::TAU;

use super::scale_space::ScaleSpace;
use super::Keypoint;
use crate::imaging::GrayImage;

pub const ORIENTATION_BINS: usize = 36;
const WINDOW_SIGMA_FACTOR: f64 = 1.5;
const PEAK_RATIO: f64 = 0.8;

/// Central-difference gradient `(dx, dy)` at an interior pixel.
#[inline]
pub(super) fn gradient(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    (
        img.get(x + 1, y) as f64 - img.get(x - 1, y) as f64,
        img.get(x, y + 1) as f64 - img.get(x, y - 1) as f64,
    )
}

#[inline]
pub(super) fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Gaussian-weighted gradient-orientation histogram around `(cx, cy)`.
pub fn orientation_histogram(img: &GrayImage, cx: f64, cy: f64, octave_scale: f64) -> [f64; ORIENTATION_BINS] {
    let sigma = WINDOW_SIGMA_FACTOR * octave_scale;
    let radius = (3.0 * sigma).round() as i64;
    let (px, py) = (cx.round() as i64, cy.round() as i64);
    let (w, h) = (img.width() as i64, img.height() as i64);
    let denom = 2.0 * sigma * sigma;
    let mut hist = [0.0; ORIENTATION_BINS];
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
            let (gx, gy) = gradient(img, x as usize, y as usize);
            let magnitude = gx.hypot(gy);
            if magnitude == 0.0 {
                continue;
            }
            let weight = (-((dx * dx + dy * dy) as f64) / denom).exp();
            let angle = wrap_angle(gy.atan2(gx));
            let bin = (angle * ORIENTATION_BINS as f64 / TAU).round() as usize % ORIENTATION_BINS;
            hist[bin] += weight * magnitude;
        }
    }
    hist
}

/// Smooths the histogram (three circular [1,2,1]/4 passes) and returns the
/// interpolated angle of every local peak reaching `ratio` of the maximum.
pub fn orientation_peaks(hist: &[f64], ratio: f64) -> Vec<f64> {
    let n = hist.len();
    let mut smooth = hist.to_vec();
    for _ in 0..3 {
        let prev = smooth.clone();
        for i in 0..n {
            smooth[i] = 0.25 * prev[(i + n - 1) % n] + 0.5 * prev[i] + 0.25 * prev[(i + 1) % n];
        }
    }
    let max = smooth.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    for i in 0..n {
        let (l, c, r) = (smooth[(i + n - 1) % n], smooth[i], smooth[(i + 1) % n]);
        // `>=` on the right keeps one bin of a two-bin plateau.
        if c > l && c >= r && c >= ratio * max {
            let denom = l - 2.0 * c + r;
            let offset = if denom != 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
            peaks.push(wrap_angle((i as f64 + offset) * TAU / n as f64));
        }
    }
    peaks
}

/// One copy of `kp` per dominant gradient orientation.
pub fn assign_orientations(ss: &ScaleSpace, kp: &Keypoint) -> Vec<Keypoint> {
    let img = &ss.octaves[kp.octave][kp.layer];
    let hist = orientation_histogram(img, kp.octave_x, kp.octave_y, kp.octave_scale);
    orientation_peaks(&hist, PEAK_RATIO)
        .into_iter()
        .map(|orientation| Keypoint { orientation, ..kp.clone() })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bin_center(b: usize) -> f64 {
        b as f64 * TAU / ORIENTATION_BINS as f64
    }

    #[test]
    fn lone_bin_gives_its_center() {
        for b in [0, 7, 35] {
            let mut h = [0.0; ORIENTATION_BINS];
            h[b] = 3.0;
            let peaks = orientation_peaks(&h, 0.8);
            assert_eq!(peaks.len(), 1);
            assert!((peaks[0] - bin_center(b)).abs() < 1e-12);
        }
    }

    #[test]
    fn two_equal_maxima_give_two_keypoints() {
        let mut h = [0.0; ORIENTATION_BINS];
        h[4] = 2.0;
        h[20] = 2.0;
        let peaks = orientation_peaks(&h, 0.8);
        assert_eq!(peaks.len(), 2);
        assert!((peaks[0] - bin_center(4)).abs() < 1e-12);
        assert!((peaks[1] - bin_center(20)).abs() < 1e-12);
    }

    #[test]
    fn weak_secondary_peak_dropped() {
        let mut h = [0.0; ORIENTATION_BINS];
        h[4] = 2.0;
        h[20] = 1.0;
        assert_eq!(orientation_peaks(&h, 0.8).len(), 1);
        assert!(orientation_peaks(&[0.0; ORIENTATION_BINS], 0.8).is_empty());
    }

    #[test]
    fn ramp_orientation_thirty_degrees() {
        let theta = 30f64.to_radians();
        let img = GrayImage::from_fn(41, 41, |x, y| (0.2 + 0.01 * (x as f64 * theta.cos() + y as f64 * theta.sin())) as f32);
        // Oracle: the histogram bin holding all the mass is the one whose
        // center is nearest to 30 degrees.
        let hist = orientation_histogram(&img, 20.0, 20.0, 3.0);
        let argmax = (0..ORIENTATION_BINS).max_by(|&a, &b| hist[a].total_cmp(&hist[b])).unwrap();
        assert_eq!(argmax, 3);
        let peaks = orientation_peaks(&hist, 0.8);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].to_degrees() - 30.0).abs() < 5.0, "{}", peaks[0].to_degrees());
    }
}
