//! Desk-scale training of the CNN + LBC network on extracted patches, plus
//! a synthetic three-texture patch set for smoke-testing the trainer.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{argmax, images_to_tensor};
use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::nn::spec::{cnn_lbp, DEFAULT_LBC_SEED};
use crate::nn::train::check_trainable;
use crate::nn::{backward_and_step, forward, init_weights, NetworkSpec, WeightStore};
use crate::patching::Split;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchSample {
    pub pixels: RgbImage,
    pub label: usize,
    pub split: Split,
}

pub const TOY_CLASSES: [&str; 3] = ["horizontal_stripes", "vertical_stripes", "checks"];

/// Randomised stripe and check textures: class 0 varies along y, class 1
/// along x, class 2 along both. Period, phase, brightness, tint and noise
/// are drawn per sample.
pub fn synthetic_texture_set(train_per_class: usize, val_per_class: usize, side: usize, seed: u64) -> Vec<PatchSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(3 * (train_per_class + val_per_class));
    for (split, per_class) in [(Split::Train, train_per_class), (Split::Val, val_per_class)] {
        for i in 0..3 * per_class {
            let label = i % 3;
            let period: f64 = rng.random_range(4.0..8.0);
            let (phase_x, phase_y): (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.0..TAU));
            let base: f64 = rng.random_range(80.0..170.0);
            let amp: f64 = rng.random_range(50.0..90.0);
            let tint: [f64; 3] = [rng.random_range(0.8..1.2), rng.random_range(0.8..1.2), rng.random_range(0.8..1.2)];
            let noise: Vec<f64> = (0..side * side).map(|_| rng.random_range(-15.0..15.0)).collect();
            let pixels = RgbImage::from_fn(side, side, |x, y| {
                let sx = (TAU * x as f64 / period + phase_x).sin();
                let sy = (TAU * y as f64 / period + phase_y).sin();
                let v = match label {
                    0 => sy,
                    1 => sx,
                    _ => sx * sy,
                };
                let g = base + amp * v + noise[y * side + x];
                tint.map(|t| (g * t).round().clamp(0.0, 255.0) as u8)
            });
            out.push(PatchSample { pixels, label, split });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Seeds weight initialisation and the per-epoch shuffle.
    pub seed: u64,
    /// Stop after the first epoch whose validation accuracy reaches this.
    pub stop_at_val_accuracy: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { epochs: 200, lr: 0.05, batch_size: 16, seed: 42, stop_at_val_accuracy: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when there are no validation samples.
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub spec: NetworkSpec,
    pub weights: WeightStore,
    pub log: Vec<EpochLog>,
}

/// `epoch,train_loss,val_accuracy`, one row per completed epoch.
pub fn training_log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,val_accuracy\n");
    for e in log {
        let acc = e.val_accuracy.map_or_else(String::new, |a| format!("{a:.6}"));
        writeln!(s, "{},{:.6},{acc}", e.epoch, e.train_loss).unwrap();
    }
    s
}

fn accuracy(spec: &NetworkSpec, ws: &WeightStore, samples: &[&PatchSample], side: usize) -> Result<f64> {
    let mut correct = 0;
    for chunk in samples.chunks(64) {
        let images: Vec<RgbImage> = chunk.iter().map(|s| s.pixels.clone()).collect();
        let probs = forward(spec, ws, &images_to_tensor(&images, side))?;
        for (i, s) in chunk.iter().enumerate() {
            let row: Vec<f64> = probs.row(i).iter().map(|&v| v as f64).collect();
            correct += usize::from(argmax(&row) == s.label);
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Mini-batch SGD on the `cnn_lbp` network sized to the patches. The LBC
/// anchors always use the architecture's fixed anchor seed so the saved
/// weights pair with the stock network description.
pub fn train_toy(samples: &[PatchSample], classes: usize, opts: &TrainOptions) -> Result<TrainedModel> {
    let first = samples.first().ok_or_else(|| Error::Config("no training patches".into()))?;
    let side = first.pixels.width();
    if let Some(s) = samples.iter().find(|s| s.pixels.width() != side || s.pixels.height() != side) {
        return Err(Error::InconsistentDimensions(format!(
            "patch of {}x{} among {side}x{side} patches",
            s.pixels.width(),
            s.pixels.height()
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.label >= classes) {
        return Err(Error::LabelOutOfRange { label: s.label, classes });
    }
    if opts.batch_size == 0 || !(opts.lr > 0.0) {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let spec = cnn_lbp(classes, side, DEFAULT_LBC_SEED);
    spec.validate()?;
    check_trainable(&spec)?;
    let mut weights = init_weights(&spec, opts.seed)?;

    let train: Vec<&PatchSample> = samples.iter().filter(|s| s.split == Split::Train).collect();
    let val: Vec<&PatchSample> = samples.iter().filter(|s| s.split == Split::Val).collect();
    if train.is_empty() {
        return Err(Error::Config("no patches in the training split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::new();
    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(opts.batch_size) {
            let images: Vec<RgbImage> = batch.iter().map(|&i| train[i].pixels.clone()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train[i].label).collect();
            let x = images_to_tensor(&images, side);
            loss_sum += backward_and_step(&spec, &mut weights, &x, &labels, opts.lr)? * batch.len() as f64;
        }
        let val_accuracy = if val.is_empty() { None } else { Some(accuracy(&spec, &weights, &val, side)?) };
        log.push(EpochLog { epoch, train_loss: loss_sum / train.len() as f64, val_accuracy });
        if let (Some(target), Some(acc)) = (opts.stop_at_val_accuracy, val_accuracy) {
            if acc >= target {
                break;
            }
        }
    }
    Ok(TrainedModel { spec, weights, log })
}
