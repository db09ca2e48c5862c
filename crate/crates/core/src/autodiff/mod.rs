//! Dense tensors with reverse-mode differentiation, enough to express and
//! train small strided-convolution GANs.

pub mod gradcheck;
pub mod kernels;
pub mod optim;
pub mod tape;

pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use kernels::op_threads;
pub use optim::{AdamConfig, AdamState, ParamSet};
pub use tape::{BatchNormMode, BnRunning, Gradients, Tape, Var};
