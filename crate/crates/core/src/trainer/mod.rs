//! Training pairs, loss, the Nadam optimizer and the training loop.

pub mod train;
pub mod nadam;
pub mod pairs;

pub use train::{train, EpochRecord, History, TrainConfig};
pub use nadam::{nadam_update, NadamConfig, NadamState};
pub use pairs::{bce_loss, make_pairs, TrainingPair};
