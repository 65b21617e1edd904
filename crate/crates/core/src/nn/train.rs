//! Softmax cross-entropy, reverse-mode gradients and plain SGD for the
//! convolution / LBC / dense family of networks.

use super::forward::{forward_trace, layer_anchors};
use super::ops;
use super::spec::{LayerSpec, NetworkSpec, LBC_PAD, LBC_STRIDE};
use super::tensor::{Scalar, Tensor};
use super::weights::WeightStore;
use crate::error::{Error, Result};

/// Fails unless every layer has a backward rule and the net ends in a
/// single softmax.
pub fn check_trainable(spec: &NetworkSpec) -> Result<()> {
    let last = spec.layers.len().checked_sub(1);
    for (i, layer) in spec.layers.iter().enumerate() {
        let ok = match layer {
            LayerSpec::Conv2d { .. }
            | LayerSpec::Lbc { .. }
            | LayerSpec::Dense { .. }
            | LayerSpec::Relu
            | LayerSpec::MaxPool { .. }
            | LayerSpec::Flatten => true,
            LayerSpec::Softmax => Some(i) == last,
            _ => false,
        };
        if !ok {
            return Err(Error::UnsupportedLayerForTraining { index: i, kind: layer.kind() });
        }
    }
    if !matches!(spec.layers.last(), Some(LayerSpec::Softmax)) {
        return Err(Error::UnsupportedLayerForTraining { index: spec.layers.len(), kind: "missing softmax" });
    }
    Ok(())
}

fn check_labels(labels: &[usize], n: usize, classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean cross-entropy of `(n, K)` logits, via log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    let (n, k) = logits.dims2()?;
    check_labels(labels, n, k)?;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().map(|v| v.widen()).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v.widen() - max).exp()).sum::<f64>().ln();
        total += lse - row[y].widen();
    }
    Ok(total / n as f64)
}

/// Mean cross-entropy and its gradient for every parameter.
pub fn loss_and_gradients<T: Scalar>(
    spec: &NetworkSpec,
    ws: &WeightStore<T>,
    x: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, WeightStore<T>)> {
    check_trainable(spec)?;
    let trace = forward_trace(spec, ws, x)?;
    let softmax_at = spec.layers.len() - 1;
    let logits = &trace[softmax_at - 1];
    let (n, k) = logits.dims2()?;
    let loss = cross_entropy(logits, labels)?;

    // d loss / d logits = (p - y) / n
    let mut grad_data = Vec::with_capacity(n * k);
    for (i, &y) in labels.iter().enumerate() {
        let p = ops::softmax_row(logits.row(i));
        grad_data.extend(p.iter().enumerate().map(|(j, &pj)| T::lift((pj - if j == y { 1.0 } else { 0.0 }) / n as f64)));
    }
    let mut g = Tensor::new(vec![n, k], grad_data)?;

    let mut grads = WeightStore::new();
    for i in (0..softmax_at).rev() {
        let input = if i == 0 { x } else { &trace[i - 1] };
        let name = spec.layer_name(i);
        let need_input = i > 0;
        g = match &spec.layers[i] {
            LayerSpec::Dense { .. } => {
                let w = ws.require(&format!("{name}.weight"))?;
                let (gw, gb, gx) = dense_backward(input, w, &g, need_input)?;
                grads.insert(format!("{name}.weight"), gw);
                grads.insert(format!("{name}.bias"), gb);
                match gx {
                    Some(gx) => gx,
                    None => break,
                }
            }
            LayerSpec::Conv2d { stride, pad, .. } => {
                let w = ws.require(&format!("{name}.weight"))?;
                let cg = ops::conv2d_backward(input, w, &g, *stride, *pad, need_input)?;
                grads.insert(format!("{name}.weight"), cg.weight);
                grads.insert(format!("{name}.bias"), cg.bias);
                match cg.input {
                    Some(gx) => gx,
                    None => break,
                }
            }
            LayerSpec::Lbc { .. } => {
                let anchors: Tensor<T> = layer_anchors(spec, i)?;
                let pre = ops::conv2d_forward(input, &anchors, None, LBC_STRIDE, LBC_PAD)?;
                let response = ops::relu(&pre);
                let lw = ws.require(&format!("{name}.weight"))?;
                let cg = ops::conv2d_backward(&response, lw, &g, 1, 0, true)?;
                grads.insert(format!("{name}.weight"), cg.weight);
                grads.insert(format!("{name}.bias"), cg.bias);
                if !need_input {
                    break;
                }
                let mut g_pre = cg.input.expect("requested input gradient");
                for (gv, pv) in g_pre.data_mut().iter_mut().zip(pre.data()) {
                    if *pv <= T::zero() {
                        *gv = T::zero();
                    }
                }
                ops::conv2d_input_grad(input, &anchors, &g_pre, LBC_STRIDE, LBC_PAD)?
            }
            LayerSpec::Relu => {
                let mut gx = g;
                for (gv, ov) in gx.data_mut().iter_mut().zip(trace[i].data()) {
                    if *ov <= T::zero() {
                        *gv = T::zero();
                    }
                }
                gx
            }
            LayerSpec::MaxPool { kernel, stride } => {
                let (_, idx) = ops::max_pool_with_indices(input, *kernel, *stride)?;
                let mut gx = Tensor::zeros(input.shape());
                let gxd = gx.data_mut();
                for (&src, &gv) in idx.iter().zip(g.data()) {
                    gxd[src] = gxd[src] + gv;
                }
                gx
            }
            LayerSpec::Flatten => g.reshape(input.shape())?,
            other => return Err(Error::UnsupportedLayerForTraining { index: i, kind: other.kind() }),
        };
    }
    Ok((loss, grads))
}

/// `(grad W, grad b, grad x)` of `y = x W^T + b`, with `x` viewed as `(n, d)`.
fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    g: &Tensor<T>,
    need_input: bool,
) -> Result<(Tensor<T>, Tensor<T>, Option<Tensor<T>>)> {
    let (d_out, d_in) = w.dims2()?;
    let n = x.batch();
    let (xd, gd, wd) = (x.data(), g.data(), w.data());
    let mut gw = vec![0f64; d_out * d_in];
    let mut gb = vec![0f64; d_out];
    for ni in 0..n {
        let row = &xd[ni * d_in..(ni + 1) * d_in];
        for o in 0..d_out {
            let go = gd[ni * d_out + o].widen();
            if go == 0.0 {
                continue;
            }
            gb[o] += go;
            for (acc, xv) in gw[o * d_in..(o + 1) * d_in].iter_mut().zip(row) {
                *acc += go * xv.widen();
            }
        }
    }
    let gx = if need_input {
        let mut out = Vec::with_capacity(n * d_in);
        let mut acc = vec![0f64; d_in];
        for ni in 0..n {
            acc.fill(0.0);
            for o in 0..d_out {
                let go = gd[ni * d_out + o].widen();
                if go == 0.0 {
                    continue;
                }
                for (a, wv) in acc.iter_mut().zip(&wd[o * d_in..(o + 1) * d_in]) {
                    *a += go * wv.widen();
                }
            }
            out.extend(acc.iter().map(|&v| T::lift(v)));
        }
        Some(Tensor::new(x.shape().to_vec(), out)?)
    } else {
        None
    };
    Ok((
        Tensor::new(vec![d_out, d_in], gw.into_iter().map(T::lift).collect())?,
        Tensor::new(vec![d_out], gb.into_iter().map(T::lift).collect())?,
        gx,
    ))
}

/// One SGD step in place; returns the loss before the update. LBC anchors
/// are not parameters and are never touched.
pub fn backward_and_step<T: Scalar>(
    spec: &NetworkSpec,
    ws: &mut WeightStore<T>,
    x: &Tensor<T>,
    labels: &[usize],
    lr: f64,
) -> Result<f64> {
    let (loss, grads) = loss_and_gradients(spec, ws, x, labels)?;
    for (name, g) in grads.iter() {
        let p = ws.get_mut(name).ok_or_else(|| Error::MissingWeight(name.clone()))?;
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv = T::lift(pv.widen() - lr * gv.widen());
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward::forward_logits;
    use crate::nn::spec::{build_architecture, cnn_lbp};
    use crate::nn::weights::init_weights;

    fn single_dense() -> NetworkSpec {
        NetworkSpec {
            name: "lin".into(),
            input: (4, 1, 1),
            layers: vec![LayerSpec::Flatten, LayerSpec::dense(3), LayerSpec::Softmax],
            classes: 3,
        }
    }

    #[test]
    fn dense_gradient_closed_form() {
        let spec = single_dense();
        let ws = init_weights(&spec, 2).unwrap().cast::<f64>();
        let x = Tensor::<f64>::from_fn(&[2, 4, 1, 1], |i| (i as f64 * 0.7).sin());
        let labels = [2, 0];
        let (_, grads) = loss_and_gradients(&spec, &ws, &x, &labels).unwrap();
        let logits = forward_logits(&spec, &ws, &x).unwrap();
        let mut want = Tensor::<f64>::zeros(&[3, 4]);
        for n in 0..2 {
            let p = ops::softmax_row(logits.row(n));
            for o in 0..3 {
                let d = (p[o] - if o == labels[n] { 1.0 } else { 0.0 }) / 2.0;
                for j in 0..4 {
                    want.data_mut()[o * 4 + j] += d * x.data()[n * 4 + j];
                }
            }
        }
        assert!(grads.get("001_dense.weight").unwrap().rel_err(&want) < 1e-6);
    }

    #[test]
    fn one_hot_prediction_has_zero_logit_gradient() {
        let spec = single_dense();
        let mut ws = WeightStore::<f64>::new();
        ws.insert("001_dense.weight", Tensor::zeros(&[3, 4]));
        // a huge bias makes p exactly one-hot in f64
        ws.insert("001_dense.bias", Tensor::new(vec![3], vec![0.0, 1e4, 0.0]).unwrap());
        let x = Tensor::<f64>::filled(&[1, 4, 1, 1], 1.0);
        let (loss, grads) = loss_and_gradients(&spec, &ws, &x, &[1]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.get("001_dense.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cross_entropy_uniform() {
        let l = cross_entropy(&Tensor::<f32>::zeros(&[2, 4]), &[0, 3]).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!(matches!(cross_entropy(&Tensor::<f32>::zeros(&[1, 4]), &[4]), Err(Error::LabelOutOfRange { .. })));
        assert!(matches!(cross_entropy(&Tensor::<f32>::zeros(&[1, 4]), &[0, 1]), Err(Error::LengthMismatch(..))));
    }

    #[test]
    fn overfits_one_batch() {
        let spec = cnn_lbp(3, 8, 7);
        let mut ws = init_weights(&spec, 5).unwrap();
        let x = Tensor::from_fn(&[4, 3, 8, 8], |i| ((i * 37) % 101) as f32 / 101.0);
        let labels = [0, 1, 2, 1];
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let loss = backward_and_step(&spec, &mut ws, &x, &labels, 1e-2).unwrap();
            assert!(loss < prev, "step {step}: {loss} >= {prev}");
            prev = loss;
        }
    }

    #[test]
    fn anchors_are_not_parameters() {
        let spec = cnn_lbp(3, 8, 7);
        let ws = init_weights(&spec, 5).unwrap();
        let x = Tensor::from_fn(&[2, 3, 8, 8], |i| (i as f32 * 0.01).cos());
        let (_, grads) = loss_and_gradients(&spec, &ws, &x, &[0, 2]).unwrap();
        let names: Vec<&String> = grads.iter().map(|(k, _)| k).collect();
        let want: Vec<&String> = ws.iter().map(|(k, _)| k).collect();
        assert_eq!(names, want);
        assert_eq!(grads.get("003_lbc.weight").unwrap().shape(), &[32, 32, 1, 1]);
    }

    #[test]
    fn residual_nets_are_rejected() {
        let spec = build_architecture("resnet50", 10).unwrap();
        let ws = WeightStore::<f32>::new();
        let x = Tensor::zeros(&[1, 3, 224, 224]);
        let err = loss_and_gradients(&spec, &ws, &x, &[0]).unwrap_err();
        assert!(matches!(err, Error::UnsupportedLayerForTraining { .. }));
    }
}
