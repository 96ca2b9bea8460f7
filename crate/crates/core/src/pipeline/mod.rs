//! Dataset-to-graph conversion, curriculum training, rollouts and mean-IoU
//! evaluation.

mod eval;
mod graphs;
mod metrics;
mod train;

pub use eval::{
    evaluate, format_table, parse_csv, read_csv, rollout, to_csv, Breakdown, EvalItem, EvalMode,
    EvalReport, MaskPredictor, ModelRollout, OracleEcho, ReportRow, ZeroMasks, CSV_HEADER,
};
pub use graphs::{
    control, control_steps, episode_to_graphs, step_graph, step_targets, visual_rows,
};
pub use metrics::{iou, MASK_THRESHOLD};
pub use train::{split_evenly, stage_checkpoint_path, train, EpochLog, TrainConfig, TrainReport};
