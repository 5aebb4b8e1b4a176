//! Benchmark manifests, runs and reports.

mod ablation;
mod manifest;
mod report;
mod run;

pub use ablation::{
    blob_targets, clip_epe, mean_epe, run_ablation, AblationProtocol, AblationResult, AblationRow,
    TrackSetting,
};
pub use manifest::{
    load_manifest, manifest_to_string, parse_manifest, write_blob_cases, BenchmarkCase, LoadedCase,
    TrackTarget,
};
pub use report::{write_outputs, Aggregate, CaseResult, EvalReport, LogEvent, RunConfig};
pub use run::run_benchmark;
