use super::SiftParams;
use crate::error::{Error, Result};
use crate::imaging::{downsample2, gaussian_blur, GrayImage};

/// Mapping between octave pixels and the caller's input pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub input_width: usize,
    pub input_height: usize,
    pub upsampled: bool,
    pub scales_per_octave: usize,
    pub base_sigma: f64,
}

impl Frame {
    /// Octave pixel -> input pixel. Octave `o` samples base pixel `2^o * c`;
    /// the base image (when upsampled) uses half-pixel-centered bilinear.
    pub fn to_input(&self, octave: usize, x: f64, y: f64) -> (f64, f64) {
        let f = (1u64 << octave) as f64;
        let (bx, by) = (x * f, y * f);
        if self.upsampled {
            ((bx + 0.5) / 2.0 - 0.5, (by + 0.5) / 2.0 - 0.5)
        } else {
            (bx, by)
        }
    }

    pub fn sigma_to_input(&self, octave: usize, sigma: f64) -> f64 {
        let s = sigma * (1u64 << octave) as f64;
        if self.upsampled {
            s / 2.0
        } else {
            s
        }
    }

    /// Sigma, in octave pixels, of (fractional) layer `layer`.
    pub fn octave_sigma(&self, layer: f64) -> f64 {
        self.base_sigma * 2f64.powf(layer / self.scales_per_octave as f64)
    }
}

#[derive(Debug, Clone)]
pub struct ScaleSpace {
    /// `octaves[o]` holds `scales_per_octave + 3` images of equal size.
    pub octaves: Vec<Vec<GrayImage>>,
    /// Absolute sigma of each level in base-image pixels:
    /// `base_sigma * 2^(o + s / scales_per_octave)`.
    pub sigmas: Vec<Vec<f64>>,
    pub frame: Frame,
}

#[derive(Debug, Clone)]
pub struct DogPyramid {
    /// `octaves[o][s] = gauss[o][s + 1] - gauss[o][s]`.
    pub octaves: Vec<Vec<GrayImage>>,
    pub frame: Frame,
}

pub fn build_scale_space(img: &GrayImage, p: &SiftParams) -> Result<ScaleSpace> {
    p.validate()?;
    if img.width().min(img.height()) < 16 {
        return Err(Error::DimensionTooSmall(format!(
            "SIFT needs at least 16x16, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let s = p.scales_per_octave;
    let levels = s + 3;
    let (base, camera_sigma) = if p.upsample {
        (img.resize_bilinear(img.width() * 2, img.height() * 2), 2.0 * p.assumed_camera_sigma)
    } else {
        (img.clone(), p.assumed_camera_sigma)
    };
    let first = gaussian_blur(&base, (p.base_sigma.powi(2) - camera_sigma.powi(2)).max(0.0).sqrt());

    let increments: Vec<f64> = (1..levels)
        .map(|l| {
            let prev = p.base_sigma * 2f64.powf((l - 1) as f64 / s as f64);
            let next = p.base_sigma * 2f64.powf(l as f64 / s as f64);
            (next * next - prev * prev).sqrt()
        })
        .collect();

    let n_octaves = p.octaves_for(img.width(), img.height());
    let mut octaves: Vec<Vec<GrayImage>> = Vec::with_capacity(n_octaves);
    let mut sigmas = Vec::with_capacity(n_octaves);
    for o in 0..n_octaves {
        let seed = match octaves.last() {
            None => first.clone(),
            Some(prev) => {
                let src: &GrayImage = &prev[s];
                if src.width().min(src.height()) < 16 {
                    break;
                }
                downsample2(src)?
            }
        };
        let mut octave = Vec::with_capacity(levels);
        octave.push(seed);
        for inc in &increments {
            let next = gaussian_blur(octave.last().expect("non-empty"), *inc);
            octave.push(next);
        }
        sigmas.push(
            (0..levels)
                .map(|l| p.base_sigma * 2f64.powf(o as f64 + l as f64 / s as f64))
                .collect(),
        );
        octaves.push(octave);
    }

    Ok(ScaleSpace {
        octaves,
        sigmas,
        frame: Frame {
            input_width: img.width(),
            input_height: img.height(),
            upsampled: p.upsample,
            scales_per_octave: s,
            base_sigma: p.base_sigma,
        },
    })
}

pub fn compute_dog(ss: &ScaleSpace) -> DogPyramid {
    let octaves = ss
        .octaves
        .iter()
        .map(|levels| {
            levels
                .windows(2)
                .map(|pair| {
                    let values = pair[1].values().iter().zip(pair[0].values()).map(|(a, b)| a - b).collect();
                    GrayImage::new(pair[0].width(), pair[0].height(), values).expect("same dims")
                })
                .collect()
        })
        .collect();
    DogPyramid { octaves, frame: ss.frame }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_levels_stay_constant() {
        let ss = build_scale_space(&GrayImage::filled(32, 32, 0.3), &SiftParams::default()).unwrap();
        for octave in &ss.octaves {
            assert_eq!(octave.len(), 6);
            for level in octave {
                assert!(level.values().iter().all(|v| (v - 0.3).abs() < 1e-6));
            }
        }
        let dog = compute_dog(&ss);
        assert!(dog.octaves.iter().flatten().all(|d| d.values().iter().all(|v| v.abs() < 1e-6)));
    }

    #[test]
    fn level_sigmas_and_dimensions() {
        let ss = build_scale_space(&GrayImage::filled(128, 96, 0.5), &SiftParams::default()).unwrap();
        assert_eq!(ss.octaves.len(), 3);
        for s in 0..6 {
            let want = 1.6 * 2f64.powf(s as f64 / 3.0);
            assert!((ss.sigmas[0][s] - want).abs() < 1e-12);
        }
        assert!((ss.sigmas[1][0] - 3.2).abs() < 1e-12);
        for (o, octave) in ss.octaves.iter().enumerate() {
            for level in octave {
                assert_eq!(level.width(), 256 >> o);
                assert_eq!(level.height(), 192 >> o);
            }
        }
    }

    #[test]
    fn levels_match_direct_blur_of_base() {
        let img = GrayImage::from_fn(48, 48, |x, y| {
            let (fx, fy) = (x as f64 / 48.0, y as f64 / 48.0);
            (0.5 + 0.25 * (6.0 * fx).sin() * (5.0 * fy).cos() + 0.2 * ((x * 7 + y * 3) % 5) as f64 / 5.0) as f32
        });
        let ss = build_scale_space(&img, &SiftParams::default()).unwrap();
        let base = &ss.octaves[0][0];
        for s in 1..6 {
            let extra = (ss.sigmas[0][s].powi(2) - ss.sigmas[0][0].powi(2)).sqrt();
            let direct = gaussian_blur(base, extra);
            let diff = ss.octaves[0][s].max_abs_diff(&direct);
            assert!(diff < 5e-3, "level {s}: {diff}");
        }
    }

    #[test]
    fn dog_is_elementwise_difference() {
        let mut rng = crate::rng::SplitMix64::new(11);
        let img = GrayImage::from_fn(40, 36, |_, _| rng.next_f64() as f32);
        let ss = build_scale_space(&img, &SiftParams::default()).unwrap();
        let dog = compute_dog(&ss);
        for (o, octave) in dog.octaves.iter().enumerate() {
            assert_eq!(octave.len(), 5);
            for (s, d) in octave.iter().enumerate() {
                for (i, &v) in d.values().iter().enumerate() {
                    assert_eq!(v, ss.octaves[o][s + 1].values()[i] - ss.octaves[o][s].values()[i]);
                }
            }
        }
    }

    #[test]
    fn frame_mapping() {
        let f = Frame { input_width: 10, input_height: 10, upsampled: true, scales_per_octave: 3, base_sigma: 1.6 };
        assert_eq!(f.to_input(0, 0.5, 2.5), (0.0, 1.0));
        assert_eq!(f.to_input(1, 1.0, 0.0), (0.75, -0.25));
        assert_eq!(f.sigma_to_input(2, 1.6), 3.2);
        let g = Frame { upsampled: false, ..f };
        assert_eq!(g.to_input(2, 1.5, 1.0), (6.0, 4.0));
    }
}
