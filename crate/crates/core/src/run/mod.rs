//! Run orchestration: configs, checkpoints, training, evaluation and grids.

mod ablate;
mod checkpoint;
mod config;
mod eval;
mod provider;
mod train;

pub use ablate::{
    rows_to_csv, run_ablation, AblateRow, BnSetting, GridCell, GridConfig, StemSetting,
    ABLATE_FILE, ABLATE_HEADER,
};
pub use checkpoint::{
    round_state_to_f32, BlobEntry, BlobKind, Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{DataSource, EvalSettings, LandscapeConfig, RunConfig, TrainConfig};
pub use eval::{evaluate_model, write_eval, DETECTIONS_FILE, EVAL_FILE};
pub use provider::DataProvider;
pub use train::{
    batch_indices, checkpoint_name, init_model, train, TrainOutcome, TrainReport, CONFIG_ECHO_FILE,
    FINAL_CHECKPOINT, FINAL_LOSS_WINDOW, REPORT_FILE, TRACE_FILE,
};
