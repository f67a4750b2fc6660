//! XG-Reptile episodes, optimizers and the training procedures.

mod episode;
mod optim;
mod train;

pub use episode::{
    inner_loop, macro_gradient, outer_gradient, reptile_episode, xg_reptile_episode,
    EpisodeConfig, EpisodeOutcome, InnerLoop,
};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use train::{dataset_loss, train, Algorithm, Budget, EvalPoint, TrainConfig, TrainOutcome};
