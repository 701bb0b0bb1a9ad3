//! The social perception system: the shared-torso multitask network, its
//! Beliefs/NoBeliefs variants, losses, optimizer, schedule, training loop,
//! and checkpoint format.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod train;

pub use loss::{BatchLabels, LossParts};
pub use model::{BatchOutputs, ChannelConfig, ForwardCache, HeadOutputs, SpsModel, Variant};
pub use optim::{adam_step, lr_at_epoch, Adam};
pub use train::{train, train_subset, SpsConfig, TrainError, TrainingCurves};

/// The six learning-rate levels spanning the tested range.
pub const LR_LEVELS: [f64; 6] = [0.00015, 0.00025, 0.0005, 0.00075, 0.000875, 0.001];
