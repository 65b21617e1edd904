//! SIFT keypoint detection and description.
//!
//! Coordinates and scales on [`Keypoint`] are expressed in the pixels of the
//! image handed to [`detect_and_describe`]. Gradient angles are measured with
//! the y axis pointing down: `atan2(dI/dy, dI/dx)` in `[0, 2π)`.

mod descriptor;
mod extrema;
mod orientation;
mod scale_space;

pub use descriptor::{compute_descriptor, Descriptor, DESCRIPTOR_LEN};
pub use extrema::{detect_extrema, refine_keypoint, RawExtremum, Rejection};
pub use orientation::{assign_orientations, orientation_histogram, orientation_peaks, ORIENTATION_BINS};
pub use scale_space::{build_scale_space, compute_dog, DogPyramid, Frame, ScaleSpace};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

#[derive(Debug, Clone, PartialEq)]
pub struct SiftParams {
    /// `None` selects `floor(log2(min(w, h))) - 3`, at least 1.
    pub n_octaves: Option<usize>,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
    pub assumed_camera_sigma: f64,
    pub contrast_threshold: f64,
    pub edge_ratio: f64,
    pub max_interp_steps: usize,
    /// Double the input resolution before building the pyramid.
    pub upsample: bool,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            n_octaves: None,
            scales_per_octave: 3,
            base_sigma: 1.6,
            assumed_camera_sigma: 0.5,
            contrast_threshold: 0.04,
            edge_ratio: 10.0,
            max_interp_steps: 5,
            upsample: true,
        }
    }
}

impl SiftParams {
    pub fn validate(&self) -> Result<()> {
        if self.scales_per_octave < 1 {
            return Err(Error::Config("sift.scales_per_octave must be >= 1".into()));
        }
        if !(self.base_sigma > self.assumed_camera_sigma) || self.assumed_camera_sigma < 0.0 {
            return Err(Error::Config("sift.base_sigma must exceed sift.assumed_camera_sigma".into()));
        }
        if !(self.edge_ratio > 1.0) {
            return Err(Error::Config("sift.edge_ratio must be > 1".into()));
        }
        if !(self.contrast_threshold >= 0.0) {
            return Err(Error::Config("sift.contrast_threshold must be >= 0".into()));
        }
        if self.n_octaves == Some(0) {
            return Err(Error::Config("sift.n_octaves must be >= 1".into()));
        }
        Ok(())
    }

    pub fn octaves_for(&self, width: usize, height: usize) -> usize {
        self.n_octaves.unwrap_or_else(|| {
            let min = width.min(height).max(1) as f64;
            (min.log2().floor() as i64 - 3).max(1) as usize
        })
    }

    /// Principal-curvature cutoff `(r + 1)^2 / r`.
    pub fn curvature_cutoff(&self) -> f64 {
        (self.edge_ratio + 1.0).powi(2) / self.edge_ratio
    }

    /// Refined |DoG| below this is rejected.
    pub fn contrast_cutoff(&self) -> f64 {
        self.contrast_threshold / self.scales_per_octave as f64
    }

    /// Raw |DoG| must exceed this before refinement is attempted.
    pub fn prefilter_threshold(&self) -> f64 {
        0.5 * self.contrast_threshold / self.scales_per_octave as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Absolute Gaussian sigma in input pixels.
    pub scale: f64,
    /// Radians in `[0, 2π)`.
    pub orientation: f64,
    /// Interpolated |DoG| at the extremum.
    pub response: f64,
    pub octave: usize,
    pub layer: usize,
    /// Position and sigma in the pixels of the keypoint's octave.
    pub octave_x: f64,
    pub octave_y: f64,
    pub octave_scale: f64,
}

/// Canonical ordering: response descending, then y, x, scale, orientation.
pub fn canonical_order(a: &Keypoint, b: &Keypoint) -> std::cmp::Ordering {
    b.response
        .total_cmp(&a.response)
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
        .then(a.scale.total_cmp(&b.scale))
        .then(a.orientation.total_cmp(&b.orientation))
}

/// Keypoints only, skipping descriptor computation.
pub fn detect_keypoints(img: &GrayImage, p: &SiftParams) -> Result<Vec<Keypoint>> {
    let ss = build_scale_space(img, p)?;
    let dog = compute_dog(&ss);
    let mut kps = oriented_keypoints(&ss, &dog, p);
    kps.sort_by(canonical_order);
    Ok(kps)
}

fn oriented_keypoints(ss: &ScaleSpace, dog: &DogPyramid, p: &SiftParams) -> Vec<Keypoint> {
    let (w, h) = (ss.frame.input_width as f64, ss.frame.input_height as f64);
    detect_extrema(dog, p)
        .par_iter()
        .filter_map(|raw| refine_keypoint(dog, raw, p).ok())
        .filter(|kp| kp.x >= 0.0 && kp.y >= 0.0 && kp.x < w && kp.y < h)
        .flat_map_iter(|kp| assign_orientations(ss, &kp))
        .collect()
}

/// Full pipeline; output sorted by [`canonical_order`].
pub fn detect_and_describe(img: &GrayImage, p: &SiftParams) -> Result<Vec<(Keypoint, Descriptor)>> {
    let ss = build_scale_space(img, p)?;
    let dog = compute_dog(&ss);
    let mut features: Vec<(Keypoint, Descriptor)> = oriented_keypoints(&ss, &dog, p)
        .into_par_iter()
        .map(|kp| {
            let d = compute_descriptor(&ss, &kp);
            (kp, d)
        })
        .collect();
    features.sort_by(|a, b| canonical_order(&a.0, &b.0));
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn blob_image(size: usize, cx: f64, cy: f64, sigma: f64) -> GrayImage {
        GrayImage::from_fn(size, size, |x, y| {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            (0.1 + 0.8 * (-d2 / (2.0 * sigma * sigma)).exp()) as f32
        })
    }

    #[test]
    fn defaults_and_cutoffs() {
        let p = SiftParams::default();
        p.validate().unwrap();
        assert!((p.curvature_cutoff() - 12.1).abs() < 1e-12);
        assert_eq!(p.octaves_for(256, 256), 5);
        assert_eq!(p.octaves_for(16, 40), 1);
        assert_eq!(p.octaves_for(8, 8), 1);
        let bad = SiftParams { base_sigma: 0.4, ..p.clone() };
        assert!(bad.validate().is_err());
        assert!(SiftParams { edge_ratio: 1.0, ..p }.validate().is_err());
    }

    #[test]
    fn constant_image_has_no_features() {
        let img = GrayImage::filled(64, 48, 0.6);
        assert!(detect_and_describe(&img, &SiftParams::default()).unwrap().is_empty());
    }

    #[test]
    fn too_small_input() {
        let img = GrayImage::filled(15, 40, 0.6);
        assert!(matches!(detect_and_describe(&img, &SiftParams::default()), Err(Error::DimensionTooSmall(_))));
    }

    #[test]
    fn blob_detected_near_center_and_sorted() {
        let img = blob_image(64, 30.3, 33.6, 4.0);
        let feats = detect_and_describe(&img, &SiftParams::default()).unwrap();
        assert!(!feats.is_empty());
        let best = feats
            .iter()
            .map(|(k, _)| (k.x - 30.3).hypot(k.y - 33.6))
            .fold(f64::INFINITY, f64::min);
        assert!(best < 0.5, "closest keypoint {best} px from blob center");
        for pair in feats.windows(2) {
            assert_ne!(canonical_order(&pair[0].0, &pair[1].0), std::cmp::Ordering::Greater);
        }
        // Blob of sigma s has its DoG extremum near scale s*sqrt(2).
        let scale = feats[0].0.scale;
        assert!(scale > 3.0 && scale < 9.0, "scale {scale}");
    }

    #[test]
    fn post_hoc_thresholds_hold() {
        let mut rng = crate::rng::SplitMix64::new(5);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..12)
            .map(|_| (8.0 + 80.0 * rng.next_f64(), 8.0 + 80.0 * rng.next_f64(), 1.5 + 4.0 * rng.next_f64(), rng.next_f64() - 0.5))
            .collect();
        let img = GrayImage::from_fn(96, 96, |x, y| {
            let v: f64 = blobs
                .iter()
                .map(|&(cx, cy, s, a)| a * (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            (0.5 + v).clamp(0.0, 1.0) as f32
        });
        let p = SiftParams::default();
        let feats = detect_and_describe(&img, &p).unwrap();
        assert!(!feats.is_empty());
        for (kp, d) in &feats {
            assert!(kp.response >= p.contrast_cutoff());
            assert!(kp.x >= 0.0 && kp.x < 96.0 && kp.y >= 0.0 && kp.y < 96.0);
            assert!(kp.scale > 0.0);
            assert!((0.0..std::f64::consts::TAU).contains(&kp.orientation));
            let n: f64 = d.0.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6 || n == 0.0);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let img = blob_image(80, 40.0, 38.0, 5.0);
        let p = SiftParams::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| detect_and_describe(&img, &p).unwrap())
        };
        assert_eq!(run(1), run(4));
    }
}
