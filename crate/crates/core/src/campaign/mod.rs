//! Campaign configuration, planning, execution, logging and replay.

mod config;
mod exec;
mod plan;
mod record;
mod replay;
mod run;

pub use config::{CampaignConfig, RefinementConfig};
pub use exec::{execute_trial, Execution, Executor, TrialResult};
pub use plan::{
    coarse_layers, coordinate_index, derive_trial_seed, plan_stage, plan_trials, refine_layers, Layer, LayerMaps,
    PlannedTrial, StagedPlan,
};
pub use record::{
    CampaignHeader, FileLog, JsonlWriter, LayerRecord, LogEntry, LogSink, MemoryLog, TrialRecord, LOG_FORMAT,
};
pub use replay::{replay_reader, replay_str, Disagreement, MalformedRecord, ReplayOptions, ReplayReport};
pub use run::{run_campaign, run_simulated, CampaignOutcome, LayerMap, MapAggregator, RunOptions};
