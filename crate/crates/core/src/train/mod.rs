//! Loss, optimizer, epoch loop and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod epoch;
mod loss;

pub use adam::{adam_update, AdamHyper, AdamState};
pub use checkpoint::{
    Checkpoint, CheckpointManifest, RngState, TensorEntry, ALIGN, MAGIC, VERSION,
};
pub use config::TrainConfig;
pub use epoch::{
    argmax, best_checkpoint_path, curves_csv, evaluate, fit, run_epoch, test_line, train_epoch,
    EpochLog, EpochStats, Evaluation, FitOutcome, Phase, SamplePrediction, CURVES_HEADER,
};
pub use loss::cross_entropy_loss;
