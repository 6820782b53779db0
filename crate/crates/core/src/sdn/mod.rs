//! Shallow decoder networks (SDNs): small fully connected networks mapping a
//! handful of point measurements to the full state.
//!
//! Inputs pass through a fixed binary mask before the first layer. A masked
//! input is replaced by zero, so it has no influence on the output and its
//! first-layer weights receive no gradient. Pruning only ever turns mask
//! entries off.

mod adam;
mod grad;
mod model;
mod prune;
mod train;

pub use adam::{Adam, AdamConfig};
pub use grad::{loss, loss_and_gradients, Gradients};
pub use model::{init_model, Activation, Architecture, Init, SdnModel};
pub use prune::{input_rms, iterative_prune, prune_inputs, PruneMode, PruneOutcome, PruneSchedule, PruneStage};
pub use train::{train, EarlyStopping, EpochRecord, History, StopDecision, TrainConfig};
