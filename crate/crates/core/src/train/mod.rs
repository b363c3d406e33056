//! AdamW, warmup-cosine schedule, the contrastive training loop, resumable
//! checkpoints and the full-model gradient check.

mod checkpoint;
mod gradcheck;
mod optim;
mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, LOSS_LOG};
pub use gradcheck::{grad_check_model, GradCheckReport};
pub use optim::{clip_global_norm, cosine_lr, AdamW, Schedule};
pub use trainer::{epoch_order, read_loss_csv, train_contrastive, write_loss_csv, EpochLog, TrainConfig, TrainSetup, TrainState};
