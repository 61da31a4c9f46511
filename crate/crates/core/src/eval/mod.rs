//! Evaluation harness: dataset ingestion, the edit-success / locality /
//! portability metrics with their harmonic-mean summary, and the three
//! editing settings (single, sequential, incremental).

mod dataset;
mod metrics;
mod run;

pub use dataset::{
    load_dataset, read_dataset, training_samples_from_records, EvalRecord, FieldMap,
};
pub use metrics::{answer_match, harmonic_mean, normalize_text};
pub use run::{
    run_incremental, run_sequential, run_single, DecisionLogEntry, MetricReport, RecordOutcome,
};
