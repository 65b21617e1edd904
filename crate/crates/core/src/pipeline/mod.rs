//! End-to-end paths: background removal, keypoints, patches and per-patch
//! inference aggregated into one image prediction; batch execution over a
//! dataset; prediction files and the evaluation report.

mod config;
mod toy;

pub use config::{Aggregation, PipelineConfig};
pub use toy::{
    synthetic_texture_set, train_toy, training_log_csv, EpochLog, PatchSample, TrainOptions, TrainedModel,
    TOY_CLASSES,
};

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::{read_image, RgbImage};
use crate::metrics::{evaluate, render_report};
use crate::nn::spec::{build_architecture, cnn_lbp, LayerSpec, DEFAULT_LBC_SEED};
use crate::nn::{forward, init_weights, load_weights, parse_weights, NetworkSpec, Tensor, WeightStore};
use crate::patching::{extract_patches, LabeledIndex, Split};
use crate::segmentation::remove_background;
use crate::sift::detect_keypoints;

/// A network, its weights and the names of its output classes.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: NetworkSpec,
    pub weights: WeightStore,
    pub class_names: Vec<String>,
}

fn default_names(k: usize) -> Vec<String> {
    (0..k).map(|i| i.to_string()).collect()
}

impl Model {
    pub fn new(spec: NetworkSpec, weights: WeightStore, class_names: Option<Vec<String>>) -> Result<Self> {
        spec.validate()?;
        weights.check_against(&spec)?;
        let class_names = class_names.unwrap_or_else(|| default_names(spec.classes));
        if class_names.len() != spec.classes {
            return Err(Error::InconsistentDimensions(format!(
                "{} class names for a {}-class network",
                class_names.len(),
                spec.classes
            )));
        }
        Ok(Self { spec, weights, class_names })
    }

    /// Glorot-initialised weights for `arch`; useful as an untrained
    /// baseline and for exercising the pipeline.
    pub fn seeded(arch: &str, classes: usize, seed: u64, class_names: Option<Vec<String>>) -> Result<Self> {
        let spec = build_architecture(arch, classes)?;
        let weights = init_weights(&spec, seed)?;
        Self::new(spec, weights, class_names)
    }

    /// Reads an LFWT file. The class count comes from the final dense
    /// layer; for `cnn_lbp` the input side is recovered from the first dense
    /// layer so models trained on smaller patches load too.
    pub fn from_lfwt(arch: &str, bytes: &[u8], class_names: Option<Vec<String>>) -> Result<Self> {
        let raw = parse_weights(bytes)?;
        let spec = spec_for_weights(arch, &raw)?;
        let weights = load_weights(bytes, &spec)?;
        Self::new(spec, weights, class_names)
    }
}

fn spec_for_weights(arch: &str, ws: &WeightStore) -> Result<NetworkSpec> {
    let probe = build_architecture(arch, 2)?;
    let dense: Vec<usize> =
        probe.layers.iter().enumerate().filter(|(_, l)| matches!(l, LayerSpec::Dense { .. })).map(|(i, _)| i).collect();
    let last = *dense.last().expect("every architecture ends in a dense layer");
    let classes = ws.require(&format!("{}.bias", probe.layer_name(last)))?.len();
    if arch != "cnn_lbp" {
        return build_architecture(arch, classes);
    }
    let first = ws.require(&format!("{}.weight", probe.layer_name(dense[0])))?;
    let flat = first.shape().get(1).copied().unwrap_or(0);
    let q = ((flat / 32) as f64).sqrt().round() as usize;
    if q == 0 || 32 * q * q != flat {
        return Err(Error::ShapeMismatchWithSpec(format!("dense input of {flat} fits no cnn_lbp input side")));
    }
    let spec = cnn_lbp(classes, 4 * q, DEFAULT_LBC_SEED);
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrediction {
    pub class_id: usize,
    pub class_name: String,
    pub probabilities: Vec<f64>,
    pub patch_count: usize,
}

/// Channel-first `(n, 3, side, side)` tensor with values scaled to `[0, 1]`,
/// resizing any image that is not already `side x side`.
pub fn images_to_tensor(images: &[RgbImage], side: usize) -> Tensor {
    let plane = side * side;
    let mut data = vec![0f32; images.len() * 3 * plane];
    for (n, img) in images.iter().enumerate() {
        let resized;
        let img = if img.width() == side && img.height() == side {
            img
        } else {
            resized = img.resize_bilinear(side, side);
            &resized
        };
        for (p, px) in img.pixels().iter().enumerate() {
            for c in 0..3 {
                data[(n * 3 + c) * plane + p] = px[c] as f32 / 255.0;
            }
        }
    }
    Tensor::new(vec![images.len(), 3, side, side], data).expect("sized above")
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean of softmax rows and the winning class.
pub fn aggregate_mean_softmax(rows: &[Vec<f64>]) -> (Vec<f64>, usize) {
    let k = rows.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; k];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= rows.len() as f64;
    }
    let best = argmax(&mean);
    (mean, best)
}

/// Segment, detect keypoints, cut patches, classify each patch and average
/// the patch probabilities.
pub fn classify_image(img: &RgbImage, cfg: &PipelineConfig, model: &Model) -> Result<ClassPrediction> {
    let (masked, _) = remove_background(img, &cfg.segmentation)?;
    let keypoints = detect_keypoints(&masked.to_grayscale(), &cfg.sift)?;
    let patches = extract_patches(&masked, &keypoints, &cfg.patch);
    let (_, h, w) = model.spec.input;
    debug_assert_eq!(h, w);
    let pixels: Vec<RgbImage> = patches.into_iter().map(|p| p.pixels).collect();
    let probs = forward(&model.spec, &model.weights, &images_to_tensor(&pixels, h))?;
    let rows: Vec<Vec<f64>> = (0..pixels.len()).map(|i| probs.row(i).iter().map(|&v| v as f64).collect()).collect();
    let (probabilities, class_id) = match cfg.aggregation {
        Aggregation::MeanSoftmax => aggregate_mean_softmax(&rows),
    };
    Ok(ClassPrediction {
        class_id,
        class_name: model.class_names[class_id].clone(),
        probabilities,
        patch_count: pixels.len(),
    })
}

/// Runs `job` over `items` on a pool of `workers` threads; results keep the
/// input order.
pub fn run_parallel<I: Sync, O: Send>(items: &[I], workers: usize, job: impl Fn(&I) -> O + Sync) -> Result<Vec<O>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(&job).collect()))
}

/// Which part of the split a batch run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    Only(Split),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub path: String,
    pub true_label: usize,
    pub predicted_label: usize,
    pub scores: Vec<f64>,
}

/// Classifies the selected items of `index` (paths relative to `root`).
pub fn classify_dataset(
    root: &Path,
    index: &LabeledIndex,
    subset: Subset,
    cfg: &PipelineConfig,
    model: &Model,
) -> Result<Vec<PredictionRow>> {
    let items: Vec<_> = index
        .items
        .iter()
        .filter(|it| match subset {
            Subset::All => true,
            Subset::Only(s) => it.split == s,
        })
        .collect();
    let results = run_parallel(&items, cfg.workers, |it| -> Result<PredictionRow> {
        let img = read_image(root.join(&it.path))?;
        let p = classify_image(&img, cfg, model)?;
        Ok(PredictionRow {
            path: it.path.clone(),
            true_label: it.class_id,
            predicted_label: p.class_id,
            scores: p.probabilities,
        })
    })?;
    results.into_iter().collect()
}

/// `path,true_label,predicted_label,score_0..` with six-decimal scores.
pub fn predictions_csv(rows: &[PredictionRow], classes: usize) -> String {
    let mut s = String::from("path,true_label,predicted_label");
    for c in 0..classes {
        write!(s, ",score_{c}").unwrap();
    }
    s.push('\n');
    for r in rows {
        write!(s, "{},{},{}", r.path, r.true_label, r.predicted_label).unwrap();
        for v in &r.scores {
            write!(s, ",{v:.6}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_predictions(text: &str) -> Result<(Vec<PredictionRow>, usize)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::MalformedFile("empty predictions file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let k = cols.len().saturating_sub(3);
    let expected = ["path", "true_label", "predicted_label"];
    if cols.len() < 3 || cols[..3] != expected || (0..k).any(|c| cols[3 + c] != format!("score_{c}")) {
        return Err(Error::MalformedFile(format!("unexpected predictions header {header:?}")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || Error::MalformedFile(format!("predictions row {}: {line:?}", n + 1));
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 + k {
            return Err(bad());
        }
        let scores = f[3..].iter().map(|v| v.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?;
        rows.push(PredictionRow {
            path: f[0].to_string(),
            true_label: f[1].parse().map_err(|_| bad())?,
            predicted_label: f[2].parse().map_err(|_| bad())?,
            scores,
        });
    }
    Ok((rows, k))
}

/// Metrics CSV and SVG for a set of predictions.
pub fn report_artifacts(model_name: &str, rows: &[PredictionRow], class_names: &[String]) -> Result<(String, String)> {
    let k = class_names.len();
    let truth: Vec<usize> = rows.iter().map(|r| r.true_label).collect();
    let predicted: Vec<usize> = rows.iter().map(|r| r.predicted_label).collect();
    let scores: Vec<Vec<f64>> = rows.iter().map(|r| r.scores.clone()).collect();
    let (cm, report, curves) = evaluate(&truth, &predicted, &scores, k)?;
    let cm = cm.with_names(class_names.to_vec())?;
    let (mut csv, svg) = render_report(model_name, &report, &cm, &curves)?;
    writeln!(
        csv,
        "# unrounded accuracy={} precision={} recall={} f1={}",
        report.accuracy, report.precision, report.recall, report.f1
    )
    .unwrap();
    Ok((csv, svg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::save_weights;

    #[test]
    fn mean_of_two_patches() {
        let (mean, best) = aggregate_mean_softmax(&[vec![0.6, 0.4], vec![0.2, 0.8]]);
        assert!((mean[0] - 0.4).abs() < 1e-15 && (mean[1] - 0.6).abs() < 1e-15);
        assert_eq!(best, 1);
        let (_, tie) = aggregate_mean_softmax(&[vec![0.5, 0.5]]);
        assert_eq!(tie, 0);
        let same = vec![0.1, 0.7, 0.2];
        assert_eq!(aggregate_mean_softmax(&[same.clone(), same.clone(), same]).1, 1);
    }

    #[test]
    fn tensor_layout_is_channel_first() {
        let img = RgbImage::from_fn(2, 2, |x, y| [(x * 100) as u8, (y * 200) as u8, 255]);
        let t = images_to_tensor(&[img], 2);
        assert_eq!(t.shape(), &[1, 3, 2, 2]);
        assert_eq!(t.data()[1], 100.0 / 255.0);
        assert_eq!(t.data()[4 + 2], 200.0 / 255.0);
        assert_eq!(t.data()[8], 1.0);
    }

    #[test]
    fn small_cnn_lbp_weights_load_with_their_side() {
        let spec = cnn_lbp(3, 32, DEFAULT_LBC_SEED);
        let ws = init_weights(&spec, 1).unwrap();
        let model = Model::from_lfwt("cnn_lbp", &save_weights(&ws), None).unwrap();
        assert_eq!(model.spec, spec);
        assert_eq!(model.class_names, vec!["0", "1", "2"]);
    }

    #[test]
    fn classify_sums_to_one() {
        let model = Model::seeded("cnn_lbp", 4, 3, None).unwrap();
        let img = RgbImage::from_fn(96, 96, |x, y| {
            let d = ((x as f64 - 48.0).powi(2) + (y as f64 - 48.0).powi(2)).sqrt();
            if d < 30.0 { [40, (120.0 + d * 3.0) as u8, 30] } else { [230, 230, 230] }
        });
        let p = classify_image(&img, &PipelineConfig::default(), &model).unwrap();
        assert!(p.patch_count >= 1);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        assert_eq!(p.class_id, argmax(&p.probabilities));
    }

    #[test]
    fn predictions_round_trip() {
        let rows = vec![
            PredictionRow { path: "a/x.ppm".into(), true_label: 0, predicted_label: 1, scores: vec![0.25, 0.75] },
            PredictionRow { path: "b/y.ppm".into(), true_label: 1, predicted_label: 1, scores: vec![0.125, 0.875] },
        ];
        let text = predictions_csv(&rows, 2);
        assert!(text.starts_with("path,true_label,predicted_label,score_0,score_1\n"));
        assert_eq!(parse_predictions(&text).unwrap(), (rows, 2));
        assert!(parse_predictions("path,truth\n").is_err());
    }
}
