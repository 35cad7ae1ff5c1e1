//! Sequence replay, temporal-difference updates and the training loop.

mod buffer;
mod dqn;
mod trainer;

pub use buffer::{Batch, ReplayBuffer};
pub use dqn::{
    epsilon_greedy, loss_weights, sync_target, td_loss, td_targets, train_step, Optimizer,
};
pub use trainer::{EvalRecord, StepOutcome, Trainer};
