//! Minimal dense-tensor network engine: layer kernels, a layer-list
//! network with backprop, SGD with momentum, and a finite-difference
//! gradient checker.

mod gemm;
pub mod reference;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod optim;

pub use gradcheck::{finite_diff_grad_check, GradCheckReport};
pub use layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu_backward, relu_forward, softmax, softmax_cross_entropy, PoolMask,
};
pub use network::{
    argmax, batch_gradients, network_backward, network_forward, predict_scores, Activations,
    Gradients, InputGeometry, LayerSpec, NetworkSpec, Params,
};
pub use optim::sgd_momentum_step;
