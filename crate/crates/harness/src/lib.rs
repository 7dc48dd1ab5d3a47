//! Dataset ingestion, run orchestration, persistence and reporting.
//!
//! A run rephrases every question `num_draws` times, asks the answering backend
//! each variant, extracts the chosen label, aggregates the draws per question and
//! scores the resulting confidences. Everything a run produces is a pure function
//! of the seed, the config and the completion texts, so scripted and toy backends
//! give byte-identical output at any concurrency level.

pub mod backend;
pub mod dataset;
pub mod report;
pub mod runner;
pub mod seeds;
pub mod world;

pub use dataset::{load_arc_jsonl, LoadedDataset};
pub use report::{emit_report, read_raw_jsonl, replay, RunSummary};
pub use runner::{
    compare_logits_oracle, evaluate_records, run_evaluation, sweep_draws, LogitsComparison, RunConfig, RunError,
    RunRecord, SweepRow,
};
pub use world::ToyWorld;
