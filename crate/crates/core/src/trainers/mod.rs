//! Training loops: plain SGD, the forward-only rule and whitened
//! convolution regression.

mod conditioned;
mod forward_only;
mod record;
mod sgd;

pub use conditioned::{
    conv_rows, filter_error, reconstruction_error, train_conditioned_conv, ConditionedRun,
    SECOND_DIFFERENCE,
};
pub use forward_only::{
    forward_only_mse, forward_only_schedule, train_forward_only, ForwardOnlyRun, Link,
};
pub use record::{
    read_metrics_csv, RunRecord, RunStatus, SeriesPoint, TrainConfig, EVAL_SEED_OFFSET,
};
pub use sgd::{project_onto_ball, train_loop, train_sgd, BatchSource, StepOutcome};
