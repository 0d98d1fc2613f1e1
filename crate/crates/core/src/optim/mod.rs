//! L-BFGS with a strong Wolfe line search, a gradient-descent fallback, and
//! the epoch loop used to fit both autoencoders.

mod lbfgs;
mod line_search;
mod train;

pub use lbfgs::{gd_step, minimize, LbfgsConfig, LbfgsState, Minimum, Step, CURVATURE_FLOOR};
pub use line_search::{wolfe_line_search, LineSearch, WolfeParams};
pub use train::{
    evaluate_loss, loss_and_gradient, stack_groups, train, write_training_log, EarlyStopping, EpochLog,
    OptimizerKind, TrainConfig, TrainOutcome,
};
