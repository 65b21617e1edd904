//! Parameter and multiply-accumulate accounting.

use super::spec::{ActShape, LayerSpec, NetworkSpec, LBC_KERNEL};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub macs: u64,
    pub out_shape: ActShape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub layers: Vec<LayerCost>,
}

impl CostReport {
    pub fn total_params(&self) -> u64 {
        self.layers.iter().map(|l| l.params).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    /// `layer,params,macs,out_shape` with a header line.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("layer,params,macs,out_shape\n");
        for l in &self.layers {
            s.push_str(&format!("{},{},{},{}\n", l.name, l.params, l.macs, l.out_shape));
        }
        s
    }
}

/// Parameters and MACs per layer. LBC counts only its trainable 1x1 part as
/// parameters but both stages as MACs.
pub fn count_costs(spec: &NetworkSpec) -> Result<CostReport> {
    let shapes = spec.infer_shapes()?;
    let mut layers = Vec::with_capacity(spec.layers.len());
    for (i, layer) in spec.layers.iter().enumerate() {
        let input = if i == 0 { spec.input_shape() } else { shapes[i - 1].clone() };
        let out = &shapes[i];
        let spatial = |s: &ActShape| s.chw().map_or(1, |(_, h, w)| (h * w) as u64);
        let (params, macs) = match layer {
            LayerSpec::Conv2d { out_channels, kernel, .. } => {
                let (k2, cin, cout) = ((kernel * kernel) as u64, input.0[0] as u64, *out_channels as u64);
                ((k2 * cin + 1) * cout, k2 * cin * cout * spatial(out))
            }
            LayerSpec::DepthwiseConv2d { kernel, .. } => {
                let (k2, c) = ((kernel * kernel) as u64, input.0[0] as u64);
                ((k2 + 1) * c, k2 * c * spatial(out))
            }
            LayerSpec::Dense { out_dim } => {
                let (din, dout) = (input.numel() as u64, *out_dim as u64);
                ((din + 1) * dout, din * dout)
            }
            LayerSpec::Lbc { anchors, out_channels, .. } => {
                let (a, cout, cin) = (*anchors as u64, *out_channels as u64, input.0[0] as u64);
                let k2 = (LBC_KERNEL * LBC_KERNEL) as u64;
                ((a + 1) * cout, (k2 * cin * a + a * cout) * spatial(out))
            }
            LayerSpec::ResidualAdd { from, projection: Some(p) } => {
                let cin = shapes[*from].0[0] as u64;
                let cout = p.out_channels as u64;
                ((cin + 1) * cout, cin * cout * spatial(out))
            }
            _ => (0, 0),
        };
        layers.push(LayerCost { name: spec.layer_name(i), params, macs, out_shape: out.clone() });
    }
    Ok(CostReport { layers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::build_architecture;

    #[test]
    fn alexnet_conv1_params_closed_form() {
        let r = count_costs(&build_architecture("alexnet", 10).unwrap()).unwrap();
        assert_eq!(r.layers[0].params, (11 * 11 * 3 + 1) * 96);
        assert_eq!(r.layers[0].params, 34_944);
        assert_eq!(r.layers[0].macs, 11 * 11 * 3 * 96 * 55 * 55);
    }

    #[test]
    fn dense_params() {
        let spec = NetworkSpec {
            name: "d".into(),
            input: (256, 1, 1),
            layers: vec![LayerSpec::Flatten, LayerSpec::dense(10)],
            classes: 10,
        };
        let r = count_costs(&spec).unwrap();
        assert_eq!(r.layers[1].params, 2_570);
        assert_eq!(r.layers[1].macs, 2_560);
    }

    #[test]
    fn separable_block_cheaper_than_standard() {
        let separable = NetworkSpec {
            name: "sep".into(),
            input: (64, 32, 32),
            layers: vec![LayerSpec::DepthwiseConv2d { kernel: 3, stride: 1, pad: 1 }, LayerSpec::conv(64, 1, 1, 0)],
            classes: 0,
        };
        let standard = NetworkSpec { layers: vec![LayerSpec::conv(64, 3, 1, 1)], ..separable.clone() };
        let s = count_costs(&separable).unwrap().total_macs();
        let d = count_costs(&standard).unwrap().total_macs();
        // hand sums: 9*64*1024 + 64*64*1024 vs 9*64*64*1024
        assert_eq!(s, 9 * 64 * 1024 + 64 * 64 * 1024);
        assert_eq!(d, 9 * 64 * 64 * 1024);
        assert!(s < d);
    }

    #[test]
    fn csv_shape() {
        let r = count_costs(&build_architecture("cnn_lbp", 10).unwrap()).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("layer,params,macs,out_shape\n000_conv2d,448,"));
        assert!(csv.contains("003_lbc,1056,"));
        assert!(csv.trim_end().ends_with(",10"));
    }
}
