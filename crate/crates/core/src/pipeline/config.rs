//! Pipeline configuration and its INI-style text form.
//!
//! ```text
//! # comment
//! [segmentation]
//! color_tolerance = 40
//! [pipeline]
//! architecture = cnn_lbp
//! ```
//!
//! Keys are the field names of the owning module's configuration. Later
//! assignments win, so command-line overrides are applied after the file.

use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::spec::ARCHITECTURES;
use crate::patching::PatchConfig;
use crate::segmentation::SegmentationConfig;
use crate::sift::SiftParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Arithmetic mean of per-patch softmax rows.
    #[default]
    MeanSoftmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub segmentation: SegmentationConfig,
    pub sift: SiftParams,
    pub patch: PatchConfig,
    pub aggregation: Aggregation,
    pub architecture: String,
    pub weights: Option<PathBuf>,
    pub workers: usize,
    /// Fraction of the dataset assigned to training by the path-hash split.
    pub train_ratio: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            sift: SiftParams::default(),
            patch: PatchConfig::default(),
            aggregation: Aggregation::MeanSoftmax,
            architecture: "cnn_lbp".into(),
            weights: None,
            workers: 1,
            train_ratio: 0.8,
        }
    }
}

fn parse<T: FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{section}.{key}: cannot parse {value:?}")))
}

fn parse_bool(section: &str, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{section}.{key}: expected a boolean, got {value:?}"))),
    }
}

impl PipelineConfig {
    /// Defaults updated by the assignments in `text`.
    pub fn from_ini(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_ini(text)?;
        Ok(cfg)
    }

    pub fn apply_ini(&mut self, text: &str) -> Result<()> {
        let mut section: Option<String> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let section = section
                .as_deref()
                .ok_or_else(|| Error::Config(format!("line {}: assignment outside a section", n + 1)))?;
            self.set(section, key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not `section.key=value`")))?;
        let (section, key) = path
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not `section.key=value`")))?;
        self.set(section.trim(), key.trim(), value.trim())
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let s = section;
        match (section, key) {
            ("segmentation", "color_tolerance") => self.segmentation.color_tolerance = parse(s, key, value)?,
            ("segmentation", "border_margin") => self.segmentation.border_margin = parse(s, key, value)?,
            ("sift", "n_octaves") => {
                self.sift.n_octaves = if value == "auto" { None } else { Some(parse(s, key, value)?) }
            }
            ("sift", "scales_per_octave") => self.sift.scales_per_octave = parse(s, key, value)?,
            ("sift", "base_sigma") => self.sift.base_sigma = parse(s, key, value)?,
            ("sift", "assumed_camera_sigma") => self.sift.assumed_camera_sigma = parse(s, key, value)?,
            ("sift", "contrast_threshold") => self.sift.contrast_threshold = parse(s, key, value)?,
            ("sift", "edge_ratio") => self.sift.edge_ratio = parse(s, key, value)?,
            ("sift", "max_interp_steps") => self.sift.max_interp_steps = parse(s, key, value)?,
            ("sift", "upsample") => self.sift.upsample = parse_bool(s, key, value)?,
            ("patch", "scale_multiplier") => self.patch.scale_multiplier = parse(s, key, value)?,
            ("patch", "patch_side") => self.patch.patch_side = parse(s, key, value)?,
            ("patch", "max_patches") => self.patch.max_patches = parse(s, key, value)?,
            ("patch", "nms_factor") => self.patch.nms_factor = parse(s, key, value)?,
            ("pipeline", "architecture") => self.architecture = value.to_string(),
            ("pipeline", "weights") => self.weights = (!value.is_empty()).then(|| PathBuf::from(value)),
            ("pipeline", "workers") => self.workers = parse(s, key, value)?,
            ("pipeline", "train_ratio") => self.train_ratio = parse(s, key, value)?,
            ("pipeline", "aggregation") => {
                self.aggregation = match value {
                    "mean_softmax" => Aggregation::MeanSoftmax,
                    other => return Err(Error::Config(format!("pipeline.aggregation: unknown {other:?}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown setting {section}.{key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.sift.validate()?;
        self.patch.validate()?;
        if !ARCHITECTURES.contains(&self.architecture.as_str()) {
            return Err(Error::UnknownArchitecture(self.architecture.clone()));
        }
        if self.workers == 0 {
            return Err(Error::Config("pipeline.workers must be >= 1".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config("pipeline.train_ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_override_precedence() {
        let text = "# settings\n[segmentation]\ncolor_tolerance = 25  # tighter\n\n[sift]\nupsample = false\nn_octaves = 3\n[pipeline]\nworkers = 4\n";
        let mut cfg = PipelineConfig::from_ini(text).unwrap();
        assert_eq!(cfg.segmentation.color_tolerance, 25.0);
        assert_eq!(cfg.segmentation.border_margin, 2);
        assert!(!cfg.sift.upsample);
        assert_eq!(cfg.sift.n_octaves, Some(3));
        assert_eq!(cfg.workers, 4);
        cfg.apply_override("segmentation.color_tolerance=10").unwrap();
        assert_eq!(cfg.segmentation.color_tolerance, 10.0);
        cfg.apply_override("sift.n_octaves = auto").unwrap();
        assert_eq!(cfg.sift.n_octaves, None);
        cfg.validate().unwrap();
    }

    #[test]
    fn errors_name_the_problem() {
        for bad in ["x = 1", "[sift]\nbogus = 1", "[sift]\nedge_ratio = tall", "[patch]\npatch_side"] {
            assert!(matches!(PipelineConfig::from_ini(bad), Err(Error::Config(_))), "{bad}");
        }
        let mut cfg = PipelineConfig::default();
        assert!(cfg.apply_override("workers=2").is_err());
        cfg.apply_override("pipeline.architecture=lenet").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::UnknownArchitecture(_))));
    }
}
