//! Sequential execution of a [`NetworkSpec`].

use super::ops;
use super::spec::{LayerSpec, NetworkSpec, LBC_KERNEL, LBC_PAD, LBC_STRIDE};
use super::tensor::{Scalar, Tensor};
use super::weights::WeightStore;
use crate::error::{Error, Result};

/// Fixed anchors of LBC layer `i`, generated from its seed and input width.
pub fn layer_anchors<T: Scalar>(spec: &NetworkSpec, i: usize) -> Result<Tensor<T>> {
    let LayerSpec::Lbc { anchors, sparsity, seed, .. } = spec.layers[i] else {
        return Err(Error::ShapeMismatch(format!("layer {i} is not an LBC layer")));
    };
    let in_channels = if i == 0 { spec.input.0 } else { spec.infer_shapes()?[i - 1].0[0] };
    Ok(ops::lbc_anchors(anchors, in_channels, LBC_KERNEL, sparsity, seed))
}

/// Applies layer `i` of `spec`. `earlier` is the activation a residual layer
/// refers to; other layers ignore it.
pub fn layer_forward<T: Scalar>(
    spec: &NetworkSpec,
    i: usize,
    ws: &WeightStore<T>,
    x: &Tensor<T>,
    earlier: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let name = spec.layer_name(i);
    let weight = || ws.require(&format!("{name}.weight"));
    let bias = || ws.require(&format!("{name}.bias"));
    match &spec.layers[i] {
        LayerSpec::Conv2d { stride, pad, .. } => ops::conv2d_forward(x, weight()?, Some(bias()?), *stride, *pad),
        LayerSpec::DepthwiseConv2d { stride, pad, .. } => {
            ops::depthwise_conv2d_forward(x, weight()?, Some(bias()?), *stride, *pad)
        }
        LayerSpec::Relu => Ok(ops::relu(x)),
        LayerSpec::MaxPool { kernel, stride } => ops::max_pool(x, *kernel, *stride),
        LayerSpec::AvgPoolGlobal => ops::avg_pool_global(x),
        LayerSpec::Dense { .. } => ops::dense_forward(x, weight()?, Some(bias()?)),
        LayerSpec::Softmax => ops::softmax(x),
        LayerSpec::Flatten => Ok(ops::flatten(x)),
        LayerSpec::Lbc { .. } => {
            let anchors = layer_anchors(spec, i)?;
            ops::lbc_forward(x, &anchors, weight()?, bias()?, LBC_STRIDE, LBC_PAD)
        }
        LayerSpec::ResidualAdd { projection, .. } => {
            let earlier = earlier.ok_or_else(|| Error::ShapeMismatch(format!("{name}: missing skip input")))?;
            match projection {
                None => ops::residual_add(x, earlier),
                Some(p) => {
                    let skip = ops::conv2d_forward(earlier, weight()?, Some(bias()?), p.stride, 0)?;
                    ops::residual_add(x, &skip)
                }
            }
        }
    }
}

fn check_input<T: Scalar>(spec: &NetworkSpec, x: &Tensor<T>) -> Result<()> {
    let (c, h, w) = spec.input;
    match x.shape() {
        [n, xc, xh, xw] if *n > 0 && (*xc, *xh, *xw) == (c, h, w) => Ok(()),
        other => Err(Error::ShapeMismatch(format!("{} expects (n, {c}, {h}, {w}), got {other:?}", spec.name))),
    }
}

/// Runs layers `0..end`, handing each output to `keep` and returning the
/// last one. Only activations referenced by a residual layer are retained.
fn run<T: Scalar>(
    spec: &NetworkSpec,
    ws: &WeightStore<T>,
    x: &Tensor<T>,
    end: usize,
    mut keep: impl FnMut(&Tensor<T>),
) -> Result<Tensor<T>> {
    check_input(spec, x)?;
    let shapes = spec.infer_shapes()?;
    let referenced: Vec<usize> = spec
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerSpec::ResidualAdd { from, .. } => Some(*from),
            _ => None,
        })
        .collect();
    let mut saved: Vec<Option<Tensor<T>>> = vec![None; spec.layers.len()];
    let mut cur = x.clone();
    for i in 0..end {
        let earlier = match spec.layers[i] {
            LayerSpec::ResidualAdd { from, .. } => saved[from].as_ref(),
            _ => None,
        };
        let out = layer_forward(spec, i, ws, &cur, earlier)?;
        if out.shape()[1..] != shapes[i].0[..] {
            return Err(Error::ShapeMismatch(format!(
                "{}: produced {:?}, inferred {}",
                spec.layer_name(i),
                out.shape(),
                shapes[i]
            )));
        }
        debug_assert!(out.all_finite(), "non-finite activation after {}", spec.layer_name(i));
        if referenced.contains(&i) {
            saved[i] = Some(out.clone());
        }
        keep(&out);
        cur = out;
    }
    Ok(cur)
}

/// Class probabilities `(n, classes)`.
pub fn forward<T: Scalar>(spec: &NetworkSpec, ws: &WeightStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    run(spec, ws, x, spec.layers.len(), |_| {})
}

/// Output of the last layer before a trailing softmax (the whole net if
/// there is none).
pub fn forward_logits<T: Scalar>(spec: &NetworkSpec, ws: &WeightStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let end = match spec.layers.last() {
        Some(LayerSpec::Softmax) => spec.layers.len() - 1,
        _ => spec.layers.len(),
    };
    run(spec, ws, x, end, |_| {})
}

/// Every layer's output, in order.
pub fn forward_trace<T: Scalar>(spec: &NetworkSpec, ws: &WeightStore<T>, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let mut trace = Vec::with_capacity(spec.layers.len());
    run(spec, ws, x, spec.layers.len(), |t| trace.push(t.clone()))?;
    Ok(trace)
}
