//! Two-stage split segmentation with per-voxel linear models.

mod experiment;
mod features;
mod model;
mod train;

pub use experiment::{
    evaluate_baseline, evaluate_two_stage, gamma_sweep, predict_stage1, predict_stage2, run_baseline, run_two_stage,
    split_report, train_baseline, train_stage1, train_stage2, BaselineRun, ModelBundle, TwoStageModel, TwoStageRun,
};
pub use features::{extract_features, gaussian_kernel, gaussian_smooth, reflect_index, FeatureExtractorConfig};
pub use model::LinearModel;
pub use train::{loss_and_gradient, prepare_case, train, train_prepared, LossCurve, PreparedCase, Stage, TrainConfig, TrainOutcome};
