//! A small feedforward-network engine: affine layers, relu/sigmoid
//! activations, an optional softmax head, analytic backpropagation, SGD and
//! Adam, plus a finite-difference oracle for checking gradients.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod network;
pub mod optim;

pub use gradcheck::{max_relative_error, numeric_gradients, HasNetworks};
pub use loss::{binary_cross_entropy, cross_entropy, sigmoid, softmax, PROB_EPS};
pub use network::{Activation, ForwardCache, Gradients, Head, Layer, LayerGradients, Network};
pub use optim::{Algorithm, OptimizerState};
