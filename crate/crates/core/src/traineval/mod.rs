//! Loss, optimizers, the training loop, evaluation metrics and reports.

mod baseline;
mod loss;
mod metrics;
mod optim;
mod train;

pub use baseline::{fusion_margin, run_ablation, AblationRow, NearestCentroid, ABLATION_SUBSETS};
pub use loss::{cross_entropy, cross_entropy_logits};
pub use metrics::{
    argmax, compute_metrics, f_score, macro_average, parse_report, render_text, report, ClassMetrics, ConfusionMatrix,
    MacroAverage, MetricsReport, ReportFormat,
};
pub use optim::{Optimizer, OptimizerKind};
pub use train::{
    evaluate, evaluate_with_loss, train, train_with, EpochRecord, Evaluation, StopReason, TrainConfig, TrainHistory,
    TrainOutcome,
};
