//! Optimizers, the VI training loop, reverse-KL fitting, and prediction.

mod loops;
mod optim;
mod predict;
mod reverse_kl;

pub use loops::{train, train_mfvi, train_sgm, StepRecord, TrainConfig, TrainHistory};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerKind};
pub use predict::{accuracy, mse, predictive_mean, predictive_probs, softmax_rows};
pub use reverse_kl::fit_reverse_kl;
