//! Adversarial hyperspectral patch classification.
//!
//! The discriminator is a single (K+1)-way classifier that assigns real
//! patches to their class and generated patches to an extra `fake` class;
//! the generator is trained to produce patches the discriminator assigns to
//! a requested class. AdapDrop, an activation-aware variant of DropBlock,
//! regularizes both networks.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod pipeline;
pub mod regularization;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
