//! MIL slide classifiers: attention MIL trained with AdamW under a cosine
//! schedule, and the training-free MI-SimpleShot prototype classifier.

mod abmil;
mod optim;
mod simpleshot;

pub use abmil::{
    abmil_backward, abmil_forward, default_class_weights, predict_abmil, read_checkpoint,
    train_abmil, weighted_ce, write_checkpoint, AbmilForward, AbmilParams, TrainConfig,
    CHECKPOINT_MAGIC,
};
pub use optim::{adamw_step, cosine_lr, AdamState, AdamWConfig};
pub use simpleshot::{
    build_prototypes, build_prototypes_with, simpleshot_predict, Prototypes, SimpleShotConfig,
};
