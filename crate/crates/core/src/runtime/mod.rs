//! Closed-loop control: per-cycle difficulty estimation, configuration
//! selection, chunk sampling and receding-horizon execution, plus paired
//! fixed-budget baselines.

mod bundle;
mod episode;
mod report;

pub use bundle::{
    decode_action, encode_action, policy_dataset, policy_features, train_policy, PolicyBundle,
    PolicyFit, CHUNK_LEN, EXEC_LEN, POLICY_OBS_DIM,
};
pub use episode::{run_episode, CycleLog, EpisodeResult, PolicyMode};
pub use report::{
    evaluate, read_results, summary_table, write_report, ResultRow, RunReport, TimingBreakdown,
    RESULTS_HEADER, TIMING_HEADER,
};
