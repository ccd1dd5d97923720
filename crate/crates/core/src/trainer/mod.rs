//! Alternating discriminator/generator optimization, checkpoints and logs.

mod adam;
mod checkpoint;
mod config;
mod run;
mod step;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, decode_records, encode_records, load_checkpoint, load_checkpoint_with_net, save_checkpoint,
    state_records, Record, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{AdamHyper, ContextualDirections, TrainConfig};
pub use run::{
    check_dataset, loss_windows, reconstruction_l1, steps_per_epoch, train, EpochSummary, TrainOutcome, TrainSummary, CONFIG_FILE,
    FINAL_CHECKPOINT, LOSS_LOG_FILE, LOSS_LOG_HEADER, SUMMARY_FILE,
};
pub use step::{discriminator_update, Batch, TrainState};
