//! Minimal reverse-mode tensor engine.
//!
//! Tensors are NCHW. Training runs in `f32`; every op is generic over
//! [`Scalar`] so gradients can be checked in `f64`.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use activation::Activation;
pub use conv::ConvSpec;
pub use graph::{Activations, GraphBuilder, LayerGraph, Node, NodeId, Op, Param, ParamInfo, ParamSet};
pub use loss::{cross_entropy_batch, softmax, softmax_cross_entropy};
pub use optim::{optimizer_step, Hyper, OptimizerKind, OptimizerState};
pub use tensor::{Scalar, Shape, Tensor4};
