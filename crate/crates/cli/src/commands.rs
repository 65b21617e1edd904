use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use leafsift_core::imaging::{read_image, write_ppm};
use leafsift_core::nn::{build_architecture, count_costs, save_weights};
use leafsift_core::patching::{extract_patches, scan_dataset, split_dataset, Patch};
use leafsift_core::pipeline::{
    classify_dataset, classify_image, parse_predictions, predictions_csv, report_artifacts, run_parallel,
    synthetic_texture_set, train_toy, training_log_csv, Model, PatchSample, Subset, TrainOptions,
};
use leafsift_core::segmentation::remove_background;
use leafsift_core::sift::detect_keypoints;
use leafsift_core::{LabeledIndex, PipelineConfig, Split};

use crate::{Cli, Command, Failure};

type Outcome = Result<(), Failure>;

fn data(msg: impl Into<String>) -> Failure {
    Failure::Data(msg.into())
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Outcome {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| data(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| data(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))
}

/// Text to `path`, or to standard output without one.
fn emit(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Outcome {
    match path {
        Some(p) => write_file(p, text),
        None => out.write_all(text.as_bytes()).map_err(Failure::from),
    }
}

pub(crate) fn dispatch(cli: &Cli, cfg: &PipelineConfig, out: &mut dyn Write) -> Outcome {
    let seed = cli.global.seed;
    match &cli.command {
        Command::Segment { input, output, mask } => segment(cfg, input, output, mask.as_deref()),
        Command::Keypoints { input, masked, output } => keypoints(cfg, input, *masked, output.as_deref(), out),
        Command::Patch { dataset, out: dir } => patch(cfg, dataset, dir, out),
        Command::Index { dataset, output } => {
            let idx = split_dataset(scan_dataset(dataset)?, cfg.train_ratio)?;
            emit(output.as_deref(), &idx.to_csv(), out)
        }
        Command::TrainToy { patches, out: weights_out, log, epochs, lr, batch_size, stop_at, synthetic_side } => {
            let opts = TrainOptions {
                epochs: *epochs,
                lr: *lr,
                batch_size: *batch_size,
                seed,
                stop_at_val_accuracy: *stop_at,
            };
            train(patches.as_deref(), weights_out, log.as_deref(), &opts, *synthetic_side, out)
        }
        Command::Infer { arch, weights, input, classes, index } => {
            infer(cfg, arch.as_deref(), weights.as_deref(), input, classes.as_deref(), index.as_deref(), out)
        }
        Command::Evaluate { pred, truth, model, out: dir } => evaluate(pred, truth, model, dir.as_deref(), out),
        Command::Costs { arch, classes } => {
            let report = count_costs(&build_architecture(arch, *classes)?)?;
            emit(None, &report.to_csv(), out)
        }
        Command::Report { dataset, out: dir, arch, weights, split } => {
            report(cfg, seed, dataset, dir, arch.as_deref(), weights.as_deref(), split, out)
        }
    }
}

fn segment(cfg: &PipelineConfig, input: &Path, output: &Path, mask: Option<&Path>) -> Outcome {
    let img = read_image(input)?;
    let (masked, m) = remove_background(&img, &cfg.segmentation)?;
    write_ppm(output, &masked)?;
    if let Some(path) = mask {
        write_ppm(path, &m.to_rgb())?;
    }
    Ok(())
}

fn keypoints(cfg: &PipelineConfig, input: &Path, masked: bool, output: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let mut img = read_image(input)?;
    if masked {
        img = remove_background(&img, &cfg.segmentation)?.0;
    }
    let kps = run_parallel(&[()], cfg.workers, |_| detect_keypoints(&img.to_grayscale(), &cfg.sift))?
        .pop()
        .expect("one job")?;
    let mut csv = String::from("x,y,scale,orientation,response\n");
    for k in &kps {
        writeln!(csv, "{:.6},{:.6},{:.6},{:.6},{:.6}", k.x, k.y, k.scale, k.orientation, k.response).unwrap();
    }
    emit(output, &csv, out)
}

fn patch(cfg: &PipelineConfig, dataset: &Path, dir: &Path, out: &mut dyn Write) -> Outcome {
    let idx = split_dataset(scan_dataset(dataset)?, cfg.train_ratio)?;
    let results = run_parallel(&idx.items, cfg.workers, |it| -> leafsift_core::Result<Vec<Patch>> {
        let img = read_image(dataset.join(&it.path))?;
        let (masked, _) = remove_background(&img, &cfg.segmentation)?;
        let kps = detect_keypoints(&masked.to_grayscale(), &cfg.sift)?;
        Ok(extract_patches(&masked, &kps, &cfg.patch))
    })?;
    let mut manifest = String::from("patch_file,source_image,class_id,split,center_x,center_y,source_side,response\n");
    let mut total = 0;
    for (it, patches) in idx.items.iter().zip(results) {
        let patches = patches?;
        let stem = Path::new(&it.path).file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        for (n, p) in patches.iter().enumerate() {
            let rel = format!("{}/{stem}_p{n:02}.ppm", idx.classes[it.class_id]);
            let path = dir.join(&rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            write_ppm(&path, &p.pixels)?;
            writeln!(
                manifest,
                "{rel},{},{},{},{:.3},{:.3},{},{:.6}",
                it.path, it.class_id, it.split, p.source_center.0, p.source_center.1, p.source_side, p.response
            )
            .unwrap();
            total += 1;
        }
    }
    write_file(&dir.join("manifest.csv"), &manifest)?;
    writeln!(out, "wrote {total} patches from {} images to {}", idx.items.len(), dir.display())?;
    Ok(())
}

/// Patches listed in a manifest written by `patch`.
fn read_manifest(dir: &Path) -> Result<Vec<PatchSample>, Failure> {
    let text = read_text(&dir.join("manifest.csv"))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().unwrap_or("");
    if !header.starts_with("patch_file,source_image,class_id,split") {
        return Err(data(format!("unexpected manifest header {header:?}")));
    }
    let mut samples = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || data(format!("bad manifest row {line:?}"));
        if f.len() < 4 {
            return Err(bad());
        }
        let label = f[2].parse().map_err(|_| bad())?;
        let split = Split::parse(f[3]).ok_or_else(bad)?;
        samples.push(PatchSample { pixels: read_image(dir.join(f[0]))?, label, split });
    }
    if samples.is_empty() {
        return Err(data("manifest lists no patches"));
    }
    Ok(samples)
}

fn train(
    patches: Option<&Path>,
    weights_out: &Path,
    log: Option<&Path>,
    opts: &TrainOptions,
    synthetic_side: usize,
    out: &mut dyn Write,
) -> Outcome {
    let (samples, classes) = match patches {
        Some(dir) => {
            let samples = read_manifest(dir)?;
            let classes = samples.iter().map(|s| s.label).max().unwrap_or(0).max(1) + 1;
            (samples, classes)
        }
        None => {
            if synthetic_side < 4 || !synthetic_side.is_multiple_of(4) {
                return Err(usage("--synthetic-side must be a positive multiple of 4"));
            }
            (synthetic_texture_set(200, 50, synthetic_side, opts.seed), 3)
        }
    };
    let model = train_toy(&samples, classes, opts)?;
    write_file(weights_out, save_weights(&model.weights))?;
    let log_text = training_log_csv(&model.log);
    match log {
        Some(p) => write_file(p, &log_text)?,
        None => out.write_all(log_text.as_bytes())?,
    }
    Ok(())
}

fn class_names(classes: Option<&str>, index: Option<&Path>) -> Result<Option<Vec<String>>, Failure> {
    if let Some(list) = classes {
        return Ok(Some(list.split(',').map(|s| s.trim().to_string()).collect()));
    }
    match index {
        Some(p) => Ok(Some(LabeledIndex::from_csv(&read_text(p)?)?.classes)),
        None => Ok(None),
    }
}

fn load_model(cfg: &PipelineConfig, arch: Option<&str>, weights: Option<&Path>, names: Option<Vec<String>>) -> Result<Model, Failure> {
    let arch = arch.unwrap_or(&cfg.architecture);
    let path: PathBuf = weights
        .map(Path::to_path_buf)
        .or_else(|| cfg.weights.clone())
        .ok_or_else(|| usage("no weights given (use --weights or pipeline.weights)"))?;
    let bytes = fs::read(&path).map_err(|e| data(format!("cannot read {}: {e}", path.display())))?;
    Ok(Model::from_lfwt(arch, &bytes, names)?)
}

fn infer(
    cfg: &PipelineConfig,
    arch: Option<&str>,
    weights: Option<&Path>,
    input: &Path,
    classes: Option<&str>,
    index: Option<&Path>,
    out: &mut dyn Write,
) -> Outcome {
    let model = load_model(cfg, arch, weights, class_names(classes, index)?)?;
    let img = read_image(input)?;
    let p = classify_image(&img, cfg, &model)?;
    let mut line = format!("{},{}", p.class_id, p.class_name);
    for v in &p.probabilities {
        write!(line, ",{v:.6}").unwrap();
    }
    writeln!(out, "{line}")?;
    Ok(())
}

fn evaluate(pred: &Path, truth: &Path, model: &str, dir: Option<&Path>, out: &mut dyn Write) -> Outcome {
    let (mut rows, k) = parse_predictions(&read_text(pred)?)?;
    let index = LabeledIndex::from_csv(&read_text(truth)?)?;
    let labels: HashMap<&str, usize> = index.items.iter().map(|it| (it.path.as_str(), it.class_id)).collect();
    for r in &mut rows {
        let &label = labels.get(r.path.as_str()).ok_or_else(|| data(format!("{} is not in the index", r.path)))?;
        if label != r.true_label {
            return Err(data(format!("{}: predictions say class {}, index says {label}", r.path, r.true_label)));
        }
    }
    let names = if index.classes.len() == k {
        index.classes.clone()
    } else {
        (0..k).map(|i| i.to_string()).collect()
    };
    let (csv, svg) = report_artifacts(model, &rows, &names)?;
    if let Some(dir) = dir {
        write_file(&dir.join("metrics.csv"), &csv)?;
        write_file(&dir.join("report.svg"), &svg)?;
    }
    out.write_all(csv.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn report(
    cfg: &PipelineConfig,
    seed: u64,
    dataset: &Path,
    dir: &Path,
    arch: Option<&str>,
    weights: Option<&Path>,
    split: &str,
    out: &mut dyn Write,
) -> Outcome {
    let subset = match split {
        "all" => Subset::All,
        s => Subset::Only(Split::parse(s).ok_or_else(|| usage(format!("--split must be val, train or all, got {s:?}")))?),
    };
    let idx = split_dataset(scan_dataset(dataset)?, cfg.train_ratio)?;
    let k = idx.classes.len();
    if k < 2 {
        return Err(data("a report needs at least two classes"));
    }
    let arch = arch.unwrap_or(&cfg.architecture);
    let model = if weights.is_some() || cfg.weights.is_some() {
        load_model(cfg, Some(arch), weights, Some(idx.classes.clone()))?
    } else {
        Model::seeded(arch, k, seed, Some(idx.classes.clone()))?
    };
    let rows = classify_dataset(dataset, &idx, subset, cfg, &model)?;
    let (csv, svg) = report_artifacts(arch, &rows, &idx.classes)?;
    write_file(&dir.join("index.csv"), idx.to_csv())?;
    write_file(&dir.join("predictions.csv"), predictions_csv(&rows, k))?;
    write_file(&dir.join("metrics.csv"), &csv)?;
    write_file(&dir.join("report.svg"), &svg)?;
    out.write_all(csv.as_bytes())?;
    Ok(())
}
