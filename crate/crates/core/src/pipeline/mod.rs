//! The phased regime: edge autoencoder, shape classifier, benchmark
//! fine-tuning, the weight surgery between them, and checkpoints.

mod arch;
mod checkpoint;
mod surgery;
mod train;

pub use arch::{build_phase1_model, ReferenceArchitecture, DROPOUT_LAYER, ENCODER_LAYERS};
pub use checkpoint::{Checkpoint, PhaseTag, FORMAT_VERSION, MAGIC};
pub use surgery::{build_benchmark_model, build_phase2_model, remove_dropout, strip_decoder, vanilla_init};
pub use train::{evaluate, train_benchmark, train_phase1, train_phase2, PhaseConfig, EARLY_STOP_MIN_DELTA};
