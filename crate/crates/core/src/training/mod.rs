//! Desk-scale fine-tuning: losses, optimizers, synthetic tasks, the training
//! loop, the balancing-factor sweep, magnitude statistics and the
//! finite-difference gradient check.

mod gradcheck;
mod loss;
mod magnitude;
mod optim;
mod sweep;
mod task;
mod train;

pub use gradcheck::{
    finite_difference_check, gradcheck_case, run_gradcheck, GradcheckCase, GRADCHECK_EPS, GRADCHECK_TOLERANCE,
    RELATIVE_ERROR_FLOOR,
};
pub use loss::{compute_loss, LossKind};
pub use magnitude::{magnitude_report, MagnitudeRecord, MagnitudeTensor};
pub use optim::{Optimizer, OptimizerConfig};
pub use sweep::{lambda_sweep, SweepRecord, DEFAULT_RANK_BASE};
pub use task::{InputDistribution, SyntheticTask, TaskConfig, TaskKind};
pub use train::{
    build_student, evaluate, fine_tune, init_adapter, train_loop, AdapterPlan, FineTuneRun, HistoryRecord, TrainConfig,
};
