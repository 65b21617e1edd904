use super::GrayImage;
use crate::error::{Error, Result};

/// Reflect-101 index folding (`dcb|abcd|cba`), valid for any offset.
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// Normalized 1-D Gaussian taps of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / denom).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with reflect-101 borders. `sigma < 0.01` is a no-op.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    assert!(sigma >= 0.0, "negative sigma");
    if sigma < 0.01 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = (img.width(), img.height());
    let src = img.values();

    let mut tmp = vec![0f32; w * h];
    let mut line = vec![0f32; w + 2 * radius as usize];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (i, slot) in line.iter_mut().enumerate() {
            *slot = row[reflect101(i as isize - radius, w)];
        }
        for x in 0..w {
            let acc: f64 = kernel.iter().zip(&line[x..]).map(|(k, &v)| k * v as f64).sum();
            tmp[y * w + x] = acc as f32;
        }
    }

    let rows: Vec<usize> = (0..h + 2 * radius as usize)
        .map(|i| reflect101(i as isize - radius, h))
        .collect();
    let mut out = vec![0f32; w * h];
    let mut acc = vec![0f64; w];
    for y in 0..h {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (k, &sy) in kernel.iter().zip(&rows[y..]) {
            let src_row = &tmp[sy * w..(sy + 1) * w];
            for (a, &v) in acc.iter_mut().zip(src_row) {
                *a += k * v as f64;
            }
        }
        for (o, &a) in out[y * w..(y + 1) * w].iter_mut().zip(&acc) {
            *o = a as f32;
        }
    }
    GrayImage::new(w, h, out).expect("blur preserves dimensions")
}

/// Keeps every second row and column: out(i, j) = in(2i, 2j).
pub fn downsample2(img: &GrayImage) -> Result<GrayImage> {
    if img.width() < 2 || img.height() < 2 {
        return Err(Error::DimensionTooSmall(format!(
            "downsample2 needs at least 2x2, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let (w, h) = (img.width() / 2, img.height() / 2);
    Ok(GrayImage::from_fn(w, h, |x, y| img.get(2 * x, 2 * y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct dense 2-D convolution with the outer product of the 1-D kernel.
    fn dense_blur_oracle(img: &GrayImage, sigma: f64) -> GrayImage {
        let k = gaussian_kernel(sigma);
        let r = (k.len() / 2) as isize;
        let (w, h) = (img.width(), img.height());
        GrayImage::from_fn(w, h, |x, y| {
            let mut acc = 0.0f64;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = reflect101(x as isize + dx, w);
                    let sy = reflect101(y as isize + dy, h);
                    acc += k[(dy + r) as usize] * k[(dx + r) as usize] * img.get(sx, sy) as f64;
                }
            }
            acc as f32
        })
    }

    #[test]
    fn reflect101_folding() {
        let n = 4;
        let got: Vec<usize> = (-4..8).map(|i| reflect101(i, n)).collect();
        assert_eq!(got, vec![2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        assert_eq!(reflect101(-5, 1), 0);
    }

    #[test]
    fn kernel_normalized_and_sized() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(gaussian_kernel(1.6).len(), 2 * 5 + 1);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = GrayImage::filled(13, 9, 0.42);
        for sigma in [0.3, 1.0, 2.5, 7.0] {
            assert!(gaussian_blur(&img, sigma).max_abs_diff(&img) < 1e-6);
        }
    }

    #[test]
    fn tiny_sigma_is_identity() {
        let img = GrayImage::from_fn(6, 6, |x, y| (x * y) as f32 / 25.0);
        assert_eq!(gaussian_blur(&img, 0.005), img);
    }

    #[test]
    fn impulse_matches_dense_convolution() {
        let mut img = GrayImage::filled(11, 11, 0.0);
        img.set(5, 5, 1.0);
        let fast = gaussian_blur(&img, 1.0);
        let slow = dense_blur_oracle(&img, 1.0);
        assert!(fast.max_abs_diff(&slow) < 1e-6);
    }

    #[test]
    fn random_image_near_border_matches_dense_convolution() {
        let mut rng = crate::rng::SplitMix64::new(3);
        let img = GrayImage::from_fn(9, 14, |_, _| rng.next_f64() as f32);
        for sigma in [0.7, 1.6, 4.0] {
            assert!(gaussian_blur(&img, sigma).max_abs_diff(&dense_blur_oracle(&img, sigma)) < 1e-6);
        }
    }

    #[test]
    fn interior_blob_mean_preserved() {
        let img = GrayImage::from_fn(64, 64, |x, y| {
            let d2 = (x as f32 - 32.0).powi(2) + (y as f32 - 30.0).powi(2);
            (-d2 / 18.0).exp()
        });
        let out = gaussian_blur(&img, 2.0);
        assert!((out.mean() - img.mean()).abs() < 1e-4);
    }

    #[test]
    fn downsample_semantics() {
        let img = GrayImage::from_fn(4, 4, |x, y| (y * 4 + x) as f32);
        let d = downsample2(&img).unwrap();
        assert_eq!(d.values(), &[0.0, 2.0, 8.0, 10.0]);
        let d5 = downsample2(&GrayImage::filled(5, 5, 0.5)).unwrap();
        assert_eq!((d5.width(), d5.height()), (2, 2));
        assert!(d5.values().iter().all(|&v| v == 0.5));
        assert!(matches!(downsample2(&GrayImage::filled(1, 4, 0.0)), Err(Error::DimensionTooSmall(_))));
    }
}
