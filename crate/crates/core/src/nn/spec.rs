//! Network descriptions: layer list, shape inference and the six
//! reference architectures.

use std::fmt;

use crate::error::{Error, Result};

use super::ops::output_side;

/// Anchor kernel geometry of an LBC layer.
pub const LBC_KERNEL: usize = 3;
pub const LBC_STRIDE: usize = 1;
pub const LBC_PAD: usize = 1;
/// Anchor seed used by [`build_architecture`].
pub const DEFAULT_LBC_SEED: u64 = 42;

/// 1x1 strided convolution applied to the skip path when the block changes
/// channel count or resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projection {
    pub out_channels: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d { out_channels: usize, kernel: usize, stride: usize, pad: usize },
    DepthwiseConv2d { kernel: usize, stride: usize, pad: usize },
    Relu,
    MaxPool { kernel: usize, stride: usize },
    AvgPoolGlobal,
    Dense { out_dim: usize },
    Softmax,
    /// Adds the output of layer `from` (optionally projected) to the input.
    ResidualAdd { from: usize, projection: Option<Projection> },
    Lbc { anchors: usize, sparsity: f64, seed: u64, out_channels: usize },
    Flatten,
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::DepthwiseConv2d { .. } => "dwconv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::AvgPoolGlobal => "avgpool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Softmax => "softmax",
            LayerSpec::ResidualAdd { .. } => "residual",
            LayerSpec::Lbc { .. } => "lbc",
            LayerSpec::Flatten => "flatten",
        }
    }

    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv2d { out_channels, kernel, stride, pad }
    }

    pub fn dense(out_dim: usize) -> Self {
        LayerSpec::Dense { out_dim }
    }

    pub fn max_pool(kernel: usize, stride: usize) -> Self {
        LayerSpec::MaxPool { kernel, stride }
    }
}

/// Per-sample activation shape: `[c, h, w]` or `[d]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActShape(pub Vec<usize>);

impl ActShape {
    pub fn chw(&self) -> Option<(usize, usize, usize)> {
        match self.0[..] {
            [c, h, w] => Some((c, h, w)),
            _ => None,
        }
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Shape with a leading batch dimension.
    pub fn batched(&self, n: usize) -> Vec<usize> {
        std::iter::once(n).chain(self.0.iter().copied()).collect()
    }
}

impl fmt::Display for ActShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        f.write_str(&parts.join("x"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub name: String,
    /// `(channels, height, width)` of one input sample.
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
    pub classes: usize,
}

fn bad(i: usize, layer: &LayerSpec, why: impl fmt::Display) -> Error {
    Error::ShapeMismatch(format!("layer {i} ({}): {why}", layer.kind()))
}

impl NetworkSpec {
    /// Weight-entry prefix of layer `i`, e.g. `003_conv2d`.
    pub fn layer_name(&self, i: usize) -> String {
        format!("{i:03}_{}", self.layers[i].kind())
    }

    pub fn input_shape(&self) -> ActShape {
        ActShape(vec![self.input.0, self.input.1, self.input.2])
    }

    /// Output shape of every layer, in order.
    pub fn infer_shapes(&self) -> Result<Vec<ActShape>> {
        let mut shapes: Vec<ActShape> = Vec::with_capacity(self.layers.len());
        let mut cur = self.input_shape();
        for (i, layer) in self.layers.iter().enumerate() {
            let next = match layer {
                LayerSpec::Conv2d { out_channels, kernel, stride, pad } => {
                    let (_, h, w) = cur.chw().ok_or_else(|| bad(i, layer, "needs a spatial input"))?;
                    let side = |x| output_side(x, *kernel, *stride, *pad).ok_or_else(|| bad(i, layer, "kernel larger than input"));
                    if *out_channels == 0 {
                        return Err(bad(i, layer, "zero output channels"));
                    }
                    ActShape(vec![*out_channels, side(h)?, side(w)?])
                }
                LayerSpec::DepthwiseConv2d { kernel, stride, pad } => {
                    let (c, h, w) = cur.chw().ok_or_else(|| bad(i, layer, "needs a spatial input"))?;
                    let side = |x| output_side(x, *kernel, *stride, *pad).ok_or_else(|| bad(i, layer, "kernel larger than input"));
                    ActShape(vec![c, side(h)?, side(w)?])
                }
                LayerSpec::MaxPool { kernel, stride } => {
                    let (c, h, w) = cur.chw().ok_or_else(|| bad(i, layer, "needs a spatial input"))?;
                    let side = |x| output_side(x, *kernel, *stride, 0).ok_or_else(|| bad(i, layer, "window larger than input"));
                    ActShape(vec![c, side(h)?, side(w)?])
                }
                LayerSpec::Lbc { anchors, out_channels, sparsity, .. } => {
                    let (_, h, w) = cur.chw().ok_or_else(|| bad(i, layer, "needs a spatial input"))?;
                    if *anchors == 0 || *out_channels == 0 || !(0.0..=1.0).contains(sparsity) {
                        return Err(bad(i, layer, "invalid anchor configuration"));
                    }
                    let side = |x| output_side(x, LBC_KERNEL, LBC_STRIDE, LBC_PAD).ok_or_else(|| bad(i, layer, "input too small"));
                    ActShape(vec![*out_channels, side(h)?, side(w)?])
                }
                LayerSpec::AvgPoolGlobal => {
                    let (c, _, _) = cur.chw().ok_or_else(|| bad(i, layer, "needs a spatial input"))?;
                    ActShape(vec![c, 1, 1])
                }
                LayerSpec::Dense { out_dim } => ActShape(vec![*out_dim]),
                LayerSpec::Flatten => ActShape(vec![cur.numel()]),
                LayerSpec::Relu => cur.clone(),
                LayerSpec::Softmax => {
                    if cur.0.len() != 1 {
                        return Err(bad(i, layer, "needs a flat input"));
                    }
                    cur.clone()
                }
                LayerSpec::ResidualAdd { from, projection } => {
                    let earlier = shapes.get(*from).filter(|_| *from < i).ok_or_else(|| bad(i, layer, format!("refers to layer {from}, not an earlier one")))?;
                    let skip = match projection {
                        None => earlier.clone(),
                        Some(p) => {
                            let (_, h, w) = earlier.chw().ok_or_else(|| bad(i, layer, "projection needs a spatial skip"))?;
                            let side = |x| output_side(x, 1, p.stride, 0).ok_or_else(|| bad(i, layer, "bad projection"));
                            ActShape(vec![p.out_channels, side(h)?, side(w)?])
                        }
                    };
                    if skip != cur {
                        return Err(bad(i, layer, format!("skip shape {skip} vs {cur}")));
                    }
                    cur.clone()
                }
            };
            shapes.push(next.clone());
            cur = next;
        }
        Ok(shapes)
    }

    /// Shape inference plus the `(n, classes)` output contract.
    pub fn validate(&self) -> Result<Vec<ActShape>> {
        let shapes = self.infer_shapes()?;
        let out = shapes.last().cloned().unwrap_or_else(|| self.input_shape());
        if out.0 != [self.classes] {
            return Err(Error::ShapeMismatch(format!(
                "{} ends in {out}, expected {} classes",
                self.name, self.classes
            )));
        }
        Ok(shapes)
    }

    /// Every trainable parameter tensor as `(name, shape, fan_in, fan_out)`.
    pub fn parameter_layout(&self) -> Result<Vec<ParamEntry>> {
        let shapes = self.infer_shapes()?;
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let input = if i == 0 { self.input_shape() } else { shapes[i - 1].clone() };
            let name = self.layer_name(i);
            let mut push = |shape: Vec<usize>, fan_in: usize, fan_out: usize| {
                let bias = shape[0];
                out.push(ParamEntry { name: format!("{name}.weight"), shape, fan_in, fan_out });
                out.push(ParamEntry { name: format!("{name}.bias"), shape: vec![bias], fan_in, fan_out });
            };
            match layer {
                LayerSpec::Conv2d { out_channels, kernel, .. } => {
                    let c = input.0[0];
                    push(vec![*out_channels, c, *kernel, *kernel], c * kernel * kernel, out_channels * kernel * kernel);
                }
                LayerSpec::DepthwiseConv2d { kernel, .. } => {
                    let c = input.0[0];
                    push(vec![c, 1, *kernel, *kernel], kernel * kernel, kernel * kernel);
                }
                LayerSpec::Dense { out_dim } => {
                    let d = input.numel();
                    push(vec![*out_dim, d], d, *out_dim);
                }
                LayerSpec::Lbc { anchors, out_channels, .. } => {
                    push(vec![*out_channels, *anchors, 1, 1], *anchors, *out_channels);
                }
                LayerSpec::ResidualAdd { from, projection: Some(p) } => {
                    let c = shapes[*from].0[0];
                    push(vec![p.out_channels, c, 1, 1], c, p.out_channels);
                }
                _ => {}
            }
        }
        Ok(out)
    }

    pub fn census(&self) -> std::collections::BTreeMap<&'static str, usize> {
        let mut m = std::collections::BTreeMap::new();
        for l in &self.layers {
            *m.entry(l.kind()).or_insert(0) += 1;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
}

pub const ARCHITECTURES: [&str; 6] = ["alexnet", "vgg16", "vgg19", "resnet50", "mobilenet", "cnn_lbp"];

pub fn build_architecture(name: &str, classes: usize) -> Result<NetworkSpec> {
    if classes < 2 {
        return Err(Error::Config(format!("class count must be >= 2, got {classes}")));
    }
    let spec = match name {
        "alexnet" => alexnet(classes),
        "vgg16" => vgg(classes, "vgg16", [2, 2, 3, 3, 3]),
        "vgg19" => vgg(classes, "vgg19", [2, 2, 4, 4, 4]),
        "resnet50" => resnet50(classes),
        "mobilenet" => mobilenet(classes),
        "cnn_lbp" => cnn_lbp(classes, 64, DEFAULT_LBC_SEED),
        other => return Err(Error::UnknownArchitecture(other.to_string())),
    };
    spec.validate()?;
    Ok(spec)
}

fn classifier_head(layers: &mut Vec<LayerSpec>, hidden: &[usize], classes: usize) {
    layers.push(LayerSpec::Flatten);
    for &h in hidden {
        layers.push(LayerSpec::dense(h));
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::dense(classes));
    layers.push(LayerSpec::Softmax);
}

fn alexnet(classes: usize) -> NetworkSpec {
    use LayerSpec::*;
    let mut layers = vec![
        LayerSpec::conv(96, 11, 4, 0),
        Relu,
        LayerSpec::max_pool(3, 2),
        LayerSpec::conv(256, 5, 1, 2),
        Relu,
        LayerSpec::max_pool(3, 2),
        LayerSpec::conv(384, 3, 1, 1),
        Relu,
        LayerSpec::conv(384, 3, 1, 1),
        Relu,
        LayerSpec::conv(256, 3, 1, 1),
        Relu,
        LayerSpec::max_pool(3, 2),
    ];
    classifier_head(&mut layers, &[4096, 4096], classes);
    NetworkSpec { name: "alexnet".into(), input: (3, 227, 227), layers, classes }
}

fn vgg(classes: usize, name: &str, blocks: [usize; 5]) -> NetworkSpec {
    let widths = [64, 128, 256, 512, 512];
    let mut layers = Vec::new();
    for (&n, &c) in blocks.iter().zip(&widths) {
        for _ in 0..n {
            layers.push(LayerSpec::conv(c, 3, 1, 1));
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::max_pool(2, 2));
    }
    classifier_head(&mut layers, &[4096, 4096], classes);
    NetworkSpec { name: name.into(), input: (3, 224, 224), layers, classes }
}

fn resnet50(classes: usize) -> NetworkSpec {
    let mut layers = vec![LayerSpec::conv(64, 7, 2, 3), LayerSpec::Relu, LayerSpec::max_pool(3, 2)];
    let mut channels = 64;
    for (stage, (&blocks, &width)) in [3usize, 4, 6, 3].iter().zip(&[64usize, 128, 256, 512]).enumerate() {
        for b in 0..blocks {
            let stride = if stage > 0 && b == 0 { 2 } else { 1 };
            let block_input = layers.len() - 1;
            layers.push(LayerSpec::conv(width, 1, 1, 0));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::conv(width, 3, stride, 1));
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::conv(4 * width, 1, 1, 0));
            let projection = (b == 0 && (stride != 1 || channels != 4 * width))
                .then_some(Projection { out_channels: 4 * width, stride });
            layers.push(LayerSpec::ResidualAdd { from: block_input, projection });
            layers.push(LayerSpec::Relu);
            channels = 4 * width;
        }
    }
    layers.push(LayerSpec::AvgPoolGlobal);
    classifier_head(&mut layers, &[], classes);
    NetworkSpec { name: "resnet50".into(), input: (3, 224, 224), layers, classes }
}

fn mobilenet(classes: usize) -> NetworkSpec {
    let mut layers = vec![LayerSpec::conv(32, 3, 2, 1), LayerSpec::Relu];
    let plan: [(usize, usize); 13] = [
        (64, 1),
        (128, 2),
        (128, 1),
        (256, 2),
        (256, 1),
        (512, 2),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (512, 1),
        (1024, 2),
        (1024, 1),
    ];
    for (c, s) in plan {
        layers.push(LayerSpec::DepthwiseConv2d { kernel: 3, stride: s, pad: 1 });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::conv(c, 1, 1, 0));
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::AvgPoolGlobal);
    classifier_head(&mut layers, &[], classes);
    NetworkSpec { name: "mobilenet".into(), input: (3, 224, 224), layers, classes }
}

/// The trainable CNN + local-binary-convolution model at an arbitrary
/// (even, >= 4) input side. [`build_architecture`] uses side 64.
pub fn cnn_lbp(classes: usize, side: usize, seed: u64) -> NetworkSpec {
    let layers = vec![
        LayerSpec::conv(16, 3, 1, 1),
        LayerSpec::Relu,
        LayerSpec::max_pool(2, 2),
        LayerSpec::Lbc { anchors: 32, sparsity: 0.9, seed, out_channels: 32 },
        LayerSpec::max_pool(2, 2),
        LayerSpec::Flatten,
        LayerSpec::dense(128),
        LayerSpec::Relu,
        LayerSpec::dense(classes),
        LayerSpec::Softmax,
    ];
    NetworkSpec { name: "cnn_lbp".into(), input: (3, side, side), layers, classes }
}
