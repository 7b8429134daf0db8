//! Dense networks with a small reverse-mode autodiff tape.
//!
//! Every layer's activations come back in a [`ForwardRecord`], so losses and
//! priors can be attached to any hidden layer, not only the logits.

pub mod format;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tape;

pub use format::{model_fingerprint, read_model, write_model};
pub use gradcheck::{grad_check, grad_check_sampled};
pub use loss::softmax_cross_entropy;
pub use model::{
    init_params, Activation, ForwardRecord, Layer, LayerSpec, Model, ModelGrads, NetworkSpec, ParamKey, ParamKind,
};
pub use optim::{adam_step, sgd_step, Optimizer, OptimizerConfig};
pub use tape::{Gradients, NodeId, Tape};
