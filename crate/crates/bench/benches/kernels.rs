use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use leafsift_core::imaging::gaussian_blur;
use leafsift_core::nn::ops::conv2d_forward;
use leafsift_core::nn::{backward_and_step, cnn_lbp, forward, init_weights, Tensor};
use leafsift_core::segmentation::remove_background;
use leafsift_core::sift::detect_and_describe;
use leafsift_core::synth::{blob_scene, leaf};
use leafsift_core::{SegmentationConfig, SiftParams};

fn ramp(shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |i| ((i * 31) % 97) as f32 / 97.0 - 0.5)
}

fn kernels(c: &mut Criterion) {
    let x = ramp(&[1, 16, 32, 32]);
    let w = ramp(&[32, 16, 3, 3]);
    c.bench_function("conv2d 16->32 3x3 on 32x32", |b| b.iter(|| conv2d_forward(black_box(&x), &w, None, 1, 1).unwrap()));

    let img = blob_scene(256, 1);
    c.bench_function("gaussian_blur sigma 1.6 on 256x256", |b| b.iter(|| gaussian_blur(black_box(&img), 1.6)));

    let scene = blob_scene(128, 2);
    let params = SiftParams::default();
    c.bench_function("sift detect+describe 128x128", |b| b.iter(|| detect_and_describe(black_box(&scene), &params).unwrap()));

    let photo = leaf(256, 256, 1, 3);
    let seg = SegmentationConfig::default();
    c.bench_function("remove_background 256x256", |b| b.iter(|| remove_background(black_box(&photo), &seg).unwrap()));
}

fn network(c: &mut Criterion) {
    let spec = cnn_lbp(10, 64, 42);
    let ws = init_weights(&spec, 1).unwrap();
    let batch = ramp(&[8, 3, 64, 64]);
    c.bench_function("cnn_lbp forward batch 8 at 64x64", |b| b.iter(|| forward(&spec, &ws, black_box(&batch)).unwrap()));

    let small = cnn_lbp(3, 32, 42);
    let mut weights = init_weights(&small, 1).unwrap();
    let x = ramp(&[16, 3, 32, 32]);
    let labels: Vec<usize> = (0..16).map(|i| i % 3).collect();
    c.bench_function("cnn_lbp sgd step batch 16 at 32x32", |b| {
        b.iter(|| backward_and_step(&small, &mut weights, black_box(&x), &labels, 1e-3).unwrap())
    });
}

criterion_group!(benches, kernels, network);
criterion_main!(benches);
