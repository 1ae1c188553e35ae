//! Mini-batch inductive training: neighborhood sampling, the joint loss,
//! Adam with clipping, early stopping and test-node evaluation.

mod loss;
mod optim;
mod sampling;
mod trainer;

pub use loss::{joint_loss, loss_ihm, loss_los, task_loss};
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use sampling::{sample_neighborhood, sample_neighbors, Pool, SampleAudit};
pub use trainer::{evaluate_inductive, init_output_bias, train, EpochLog, EpochRow, Evaluation, TrainConfig, TrainOutcome};
