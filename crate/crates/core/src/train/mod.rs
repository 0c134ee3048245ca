//! Post selection, class balancing, training loops and evaluation.

pub mod balance;
pub mod mcnemar;
pub mod metrics;
pub mod selection;
pub mod split;
pub mod trainer;

pub use balance::{balanced_sample, class_weights, epoch_plan, BalanceMode};
pub use mcnemar::{mcnemar, mcnemar_counts, McNemar};
pub use metrics::{
    binary_exact, binary_metrics, clpsych_exact, clpsych_metrics, BinaryGroup, BinaryMetrics, ClassScore, EvalReport,
    Exact, ExactReport, Prf, Report,
};
pub use selection::{select_post_indices, select_posts, SelectionConfig, Strategy};
pub use split::{ensure_disjoint, kfold, stratified_holdout};
pub use trainer::{evaluate, train, EpochLog, TrainConfig, TrainOutcome, Trainable};
pub mod synth;
pub mod tasks;

pub use tasks::{
    depression_examples, predict_threads, predict_users, risk_examples, train_depression, train_risk, DepressionTask,
    RiskTask, ThreadPrediction, UserPrediction,
};
