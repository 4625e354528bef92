//! Developmental pre-training at desk scale.
//!
//! A small convolutional network is trained through a two-phase curriculum,
//! edge detection as an autoencoder and then nine-class shape recognition,
//! and transferred to a downstream classifier that is benchmarked against
//! an identically shaped, randomly initialized control.
//!
//! - [`tensor`], [`spec`], [`graph`], [`gradcheck`]: tensors, layer stacks,
//!   forward/backward and the finite-difference oracle.
//! - [`optim`]: losses, accuracy and update rules.
//! - [`datagen`]: procedural corpora and the on-disk dataset format.
//! - [`pipeline`]: the phased regime, weight surgery and checkpoints.
//! - [`report`]: per-epoch metrics, convergence, comparisons, CSV and SVG.

pub mod datagen;
pub mod error;
mod fsutil;
pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod spec;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{backward, forward, Mode, Tape};
pub use params::Params;
pub use spec::{LayerKind, LayerSpec, NetworkSpec};
pub use tensor::Tensor;
