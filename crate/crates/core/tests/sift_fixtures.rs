use leafsift_core::segmentation::remove_background;
use leafsift_core::sift::{detect_and_describe, detect_keypoints};
use leafsift_core::synth::{blob_scene, leaf};
use leafsift_core::{SegmentationConfig, SiftParams};

#[test]
fn masked_leaf_keypoints_lie_on_the_leaf() {
    for (class, seed) in [(0, 1), (1, 2), (2, 3)] {
        let img = leaf(96, 96, class, seed);
        let (masked, mask) = remove_background(&img, &SegmentationConfig::default()).unwrap();
        let kps = detect_keypoints(&masked.to_grayscale(), &SiftParams::default()).unwrap();
        assert!(!kps.is_empty());
        let grown = mask.dilate();
        for k in &kps {
            let (x, y) = (k.x.round() as usize, k.y.round() as usize);
            assert!(grown.get(x.min(95), y.min(95)), "keypoint at ({:.1}, {:.1}) off the leaf", k.x, k.y);
        }
    }
}

/// Downscaling by two halves positions (half-pixel centres) and scales of
/// descriptor-matched keypoints.
#[test]
fn downscale_maps_positions_and_scales() {
    let params = SiftParams::default();
    let (mut matched, mut consistent) = (0, 0);
    for seed in 1..=5 {
        let img = blob_scene(128, seed);
        let full = detect_and_describe(&img, &params).unwrap();
        let half = detect_and_describe(&img.resize_bilinear(64, 64), &params).unwrap();
        for (kp, d) in &half {
            let mut dists: Vec<(f32, usize)> = full.iter().enumerate().map(|(i, (_, e))| (d.distance_sq(e), i)).collect();
            dists.sort_by(|a, b| a.0.total_cmp(&b.0));
            if dists.len() < 2 || dists[0].0 >= 0.64 * dists[1].0 {
                continue;
            }
            matched += 1;
            let big = &full[dists[0].1].0;
            let (ex, ey) = ((big.x + 0.5) / 2.0 - 0.5, (big.y + 0.5) / 2.0 - 0.5);
            let scale_ok = (0.45..=0.55).contains(&(kp.scale / big.scale));
            if scale_ok && (kp.x - ex).hypot(kp.y - ey) <= 1.0 {
                consistent += 1;
            }
        }
    }
    assert!(matched >= 20, "{matched} matches");
    assert!(consistent as f64 >= 0.7 * matched as f64, "{consistent} of {matched} consistent");
}

/// 180 and 270 degree turns; 90 degrees is part of the acceptance suite.
#[test]
fn turned_images_match_descriptors() {
    let params = SiftParams::default();
    for turns in [2, 3] {
        let (mut ok, mut total) = (0, 0);
        for seed in 1..=5 {
            let img = blob_scene(128, seed);
            let mut turned = img.clone();
            for _ in 0..turns {
                turned = turned.rotate90();
            }
            let a = detect_and_describe(&img, &params).unwrap();
            let b = detect_and_describe(&turned, &params).unwrap();
            for (kp, d) in &a {
                let (mut x, mut y) = (kp.x, kp.y);
                for _ in 0..turns {
                    (x, y) = (127.0 - y, x);
                }
                let best = b.iter().min_by(|p, q| d.distance_sq(&p.1).total_cmp(&d.distance_sq(&q.1))).unwrap();
                ok += usize::from((best.0.x - x).hypot(best.0.y - y) <= 1.5);
                total += 1;
            }
        }
        assert!(ok as f64 >= 0.8 * total as f64, "{} quarter turns: {ok} of {total}", turns);
    }
}
