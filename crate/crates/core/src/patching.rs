//! Keypoint-guided patch extraction and the labeled dataset catalog.

use std::fmt;
use std::path::Path;

use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::imaging::RgbImage;
use crate::sift::Keypoint;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchConfig {
    /// Source window side per unit of keypoint scale.
    pub scale_multiplier: f64,
    /// Output side in pixels.
    pub patch_side: usize,
    pub max_patches: usize,
    /// Suppression radius as a fraction of the candidate's window side.
    pub nms_factor: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self { scale_multiplier: 12.0, patch_side: 64, max_patches: 16, nms_factor: 0.5 }
    }
}

impl PatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_multiplier > 0.0) || !(self.nms_factor > 0.0) || self.max_patches == 0 {
            return Err(Error::Config("patch settings must be positive".into()));
        }
        if self.patch_side < 8 {
            return Err(Error::Config(format!("patch.patch_side must be >= 8, got {}", self.patch_side)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: RgbImage,
    /// Keypoint position the window was built around.
    pub source_center: (f64, f64),
    /// Top-left corner of the source window after shifting it inside.
    pub source_origin: (usize, usize),
    pub source_side: usize,
    pub response: f64,
}

/// Source window `(x0, y0, side)` for a keypoint. The side is
/// `round(multiplier * scale)` clamped to `[patch_side / 2, min(w, h)]`; a
/// window crossing the border is shifted back inside, never shrunk.
pub fn patch_window(x: f64, y: f64, scale: f64, width: usize, height: usize, cfg: &PatchConfig) -> (usize, usize, usize) {
    let limit = width.min(height);
    let side = ((cfg.scale_multiplier * scale).round() as usize).max(cfg.patch_side / 2).min(limit).max(1);
    let place = |c: f64, extent: usize| {
        let start = (c + 0.5 - side as f64 / 2.0).floor().max(0.0) as usize;
        start.min(extent - side)
    };
    (place(x, width), place(y, height), side)
}

fn cut(img: &RgbImage, x0: usize, y0: usize, side: usize, cfg: &PatchConfig) -> RgbImage {
    img.crop(x0, y0, side, side)
        .expect("window lies inside the image")
        .resize_bilinear(cfg.patch_side, cfg.patch_side)
}

/// Patches around the strongest well-separated keypoints, or a single
/// centered crop when there are none.
pub fn extract_patches(img: &RgbImage, kps: &[Keypoint], cfg: &PatchConfig) -> Vec<Patch> {
    let (w, h) = (img.width(), img.height());
    if kps.is_empty() {
        let side = w.min(h);
        let (x0, y0) = ((w - side) / 2, (h - side) / 2);
        return vec![Patch {
            pixels: cut(img, x0, y0, side, cfg),
            source_center: (x0 as f64 + side as f64 / 2.0, y0 as f64 + side as f64 / 2.0),
            source_origin: (x0, y0),
            source_side: side,
            response: 0.0,
        }];
    }
    let mut order: Vec<&Keypoint> = kps.iter().collect();
    order.sort_by(|a, b| b.response.total_cmp(&a.response).then(a.y.total_cmp(&b.y)).then(a.x.total_cmp(&b.x)));
    let mut patches: Vec<Patch> = Vec::new();
    for kp in order {
        if patches.len() == cfg.max_patches {
            break;
        }
        let (x0, y0, side) = patch_window(kp.x, kp.y, kp.scale, w, h, cfg);
        let radius = cfg.nms_factor * side as f64;
        let crowded = patches.iter().any(|p| (p.source_center.0 - kp.x).hypot(p.source_center.1 - kp.y) < radius);
        if crowded {
            continue;
        }
        patches.push(Patch {
            pixels: cut(img, x0, y0, side, cfg),
            source_center: (kp.x, kp.y),
            source_origin: (x0, y0),
            source_side: side,
            response: kp.response,
        });
    }
    patches
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexItem {
    /// Path relative to the dataset root, `/`-separated.
    pub path: String,
    pub class_id: usize,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledIndex {
    pub classes: Vec<String>,
    pub items: Vec<IndexItem>,
}

const IMAGE_EXTENSIONS: [&str; 4] = ["ppm", "png", "jpg", "jpeg"];

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

fn unreadable(path: &Path, reason: impl fmt::Display) -> Error {
    Error::UnreadableEntry { path: path.to_path_buf(), reason: reason.to_string() }
}

/// One class per subdirectory of `root` (sorted names give the ids); every
/// image file below a class directory is an item. Items are sorted by
/// relative path and start out in the training split.
pub fn scan_dataset(root: &Path) -> Result<LabeledIndex> {
    let mut classes = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| unreadable(root, e))? {
        let entry = entry.map_err(|e| unreadable(root, e))?;
        let path = entry.path();
        let kind = entry.file_type().map_err(|e| unreadable(&path, e))?;
        if kind.is_dir() {
            let name = entry.file_name().into_string().map_err(|_| unreadable(&path, "name is not UTF-8"))?;
            if !name.starts_with('.') {
                classes.push(name);
            }
        }
    }
    classes.sort();

    let mut items = Vec::new();
    for (class_id, class) in classes.iter().enumerate() {
        let dir = root.join(class);
        for entry in WalkDir::new(&dir).follow_links(true) {
            let entry = entry.map_err(|e| unreadable(e.path().unwrap_or(&dir), &e))?;
            if !entry.file_type().is_file() || !is_image(entry.path()) {
                continue;
            }
            let rel = entry.path().strip_prefix(root).expect("walk stays under root");
            let parts = rel
                .components()
                .map(|c| c.as_os_str().to_str().ok_or_else(|| unreadable(entry.path(), "name is not UTF-8")))
                .collect::<Result<Vec<_>>>()?;
            items.push(IndexItem { path: parts.join("/"), class_id, split: Split::Train });
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyDataset(root.to_path_buf()));
    }
    items.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(LabeledIndex { classes, items })
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Hash bucket below which an item goes to validation.
pub fn validation_cutoff(train_ratio: f64) -> u64 {
    (1000.0 * (1.0 - train_ratio)).round() as u64
}

pub fn split_for(path: &str, train_ratio: f64) -> Split {
    if fnv1a64(path.as_bytes()) % 1000 < validation_cutoff(train_ratio) {
        Split::Val
    } else {
        Split::Train
    }
}

/// Assigns each item by its path hash alone, so the split does not depend on
/// enumeration order or on other items.
pub fn split_dataset(mut idx: LabeledIndex, train_ratio: f64) -> Result<LabeledIndex> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::Config(format!("train ratio must lie in (0, 1), got {train_ratio}")));
    }
    for item in &mut idx.items {
        item.split = split_for(&item.path, train_ratio);
    }
    Ok(idx)
}

impl LabeledIndex {
    /// `path,class_id,class_name,split` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("path,class_id,class_name,split\n");
        for it in &self.items {
            s.push_str(&format!("{},{},{},{}\n", it.path, it.class_id, self.classes[it.class_id], it.split));
        }
        s
    }

    /// Parses the format written by [`LabeledIndex::to_csv`]. Class names
    /// missing from the file (classes without items) are named by their id.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == "path,class_id,class_name,split" => {}
            other => return Err(Error::MalformedFile(format!("unexpected index header {other:?}"))),
        }
        let mut names: Vec<Option<String>> = Vec::new();
        let mut items = Vec::new();
        for (n, line) in lines.enumerate() {
            let bad = || Error::MalformedFile(format!("index row {}: {line:?}", n + 1));
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [path, id, name, split] = fields[..] else { return Err(bad()) };
            let class_id: usize = id.parse().map_err(|_| bad())?;
            let split = Split::parse(split).ok_or_else(bad)?;
            if names.len() <= class_id {
                names.resize(class_id + 1, None);
            }
            match &names[class_id] {
                Some(existing) if existing != name => return Err(bad()),
                _ => names[class_id] = Some(name.to_string()),
            }
            items.push(IndexItem { path: path.to_string(), class_id, split });
        }
        let classes = names.into_iter().enumerate().map(|(i, n)| n.unwrap_or_else(|| i.to_string())).collect();
        Ok(LabeledIndex { classes, items })
    }
}
