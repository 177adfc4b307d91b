//! Small deterministic MLP classifier: forward/backward, losses, optimizers,
//! supervised training with early stopping, and per-class evaluation.

mod eval;
mod loss;
mod model;
mod optim;
mod train;

pub use eval::{evaluate, predict, EvalReport};
pub use loss::{
    cross_entropy, cross_entropy_grad, kl_divergence, kl_grad, softmax_t, weighted_kl_grad,
    LossGrad, ProbDist, PROB_FLOOR,
};
pub use model::{ArchSpec, ForwardCache, Gradients, Logits, Model};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{
    epoch_order, fit, step_on_batch, train_supervised, BatchObjective, EpochRecord, Supervised,
    TrainConfig, TrainHistory,
};
