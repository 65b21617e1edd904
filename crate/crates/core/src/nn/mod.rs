//! Minimal tensor runtime: layer kernels, architectures, forward passes,
//! the LFWT weight format, cost counting and SGD training.

pub mod cost;
pub mod forward;
pub mod ops;
pub mod spec;
pub mod tensor;
pub mod train;
pub mod weights;

pub use cost::{count_costs, CostReport, LayerCost};
pub use forward::{forward, forward_logits, forward_trace, layer_forward};
pub use spec::{build_architecture, cnn_lbp, ActShape, LayerSpec, NetworkSpec, Projection, ARCHITECTURES};
pub use tensor::{Scalar, Tensor};
pub use train::{backward_and_step, cross_entropy, loss_and_gradients};
pub use weights::{init_weights, load_weights, parse_weights, save_weights, WeightStore};
