//! Leaf-disease image pipeline: studio-background removal, SIFT keypoints,
//! keypoint-guided patch extraction, a small CNN runtime (including local
//! binary convolution) and classifier evaluation.
//!
//! The crate is organised bottom-up:
//!
//! * [`imaging`] raster containers, PPM I/O, resampling and Gaussian blur
//! * [`segmentation`] border-seeded flood-fill background masking
//! * [`sift`] scale space, DoG extrema, refinement, orientation, descriptors
//! * [`patching`] patch extraction and the labeled dataset catalog
//! * [`nn`] tensors, layers, architectures, weight files, training
//! * [`metrics`] confusion matrices, summary metrics, ROC/AUC and reports
//! * [`pipeline`] configuration and the end-to-end classify/train paths
//! * [`synth`] procedural leaf and texture images for tests and benches

pub mod error;
pub mod imaging;
pub mod metrics;
pub mod nn;
pub mod patching;
pub mod pipeline;
pub mod rng;
pub mod segmentation;
pub mod sift;
pub mod synth;

pub use error::{Error, Result};
pub use imaging::{BinaryMask, GrayImage, RgbImage};
pub use metrics::{ConfusionMatrix, MetricsReport, RocCurve};
pub use nn::{LayerSpec, NetworkSpec, Tensor, WeightStore};
pub use patching::{LabeledIndex, Patch, PatchConfig, Split};
pub use pipeline::{ClassPrediction, Model, PipelineConfig};
pub use segmentation::SegmentationConfig;
pub use sift::{Descriptor, Keypoint, SiftParams};
