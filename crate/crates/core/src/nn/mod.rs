//! Minimal dense numeric core shared by every learner in the crate.
//!
//! Gradients are written out by hand for the small, fixed set of
//! architectures used here; [`grad_check`] is the finite-difference oracle
//! that keeps them honest.

mod gradcheck;
mod matrix;
mod mlp;
mod ops;
mod optim;

pub use gradcheck::{grad_check, REL_ERROR_FLOOR};
pub use matrix::{dot, euclidean, squared_euclidean, DenseMatrix};
pub use mlp::{glorot_uniform, mlp_backward, mlp_forward, Activation, MlpParams, ParamSet};
pub use ops::{cosine, cross_entropy, sigmoid, softmax_cross_entropy_grad, softmax_rows, softplus, PROB_FLOOR};
pub use optim::{adam_step, AdamConfig, OptimizerState};
