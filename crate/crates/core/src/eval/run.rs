//! The three editing settings and metric aggregation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::engine::EditEngine;
use crate::error::Error;
use crate::eval::dataset::EvalRecord;
use crate::eval::metrics::{answer_match, harmonic_mean};
use crate::router::{RoutedAnswer, RoutePath};

/// Aggregated metrics plus the per-record and per-query evidence behind
/// them. Locality and portability are absent when the dataset has no
/// queries of that kind; the harmonic mean covers the metrics present (and
/// degenerates to edit success alone if it is the only one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub setting: String,
    pub edit_success: f64,
    pub locality: Option<f64>,
    pub portability: Option<f64>,
    pub harmonic_mean: f64,
    pub records: Vec<RecordOutcome>,
    pub decisions: Vec<DecisionLogEntry>,
}

/// Pass/fail outcome of every query of one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    pub edit_ok: bool,
    pub locality_ok: Vec<bool>,
    pub portability_ok: Vec<bool>,
}

/// One routed query as the evaluator saw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionLogEntry {
    pub record_id: String,
    pub query_kind: String,
    pub query: String,
    pub answer: String,
    pub path: RoutePath,
    pub matched_edit_id: Option<String>,
    pub similarity: Option<f64>,
}

/// Single editing: each record is evaluated on a fresh engine holding only
/// its own edit. The factory must produce empty, identically configured
/// engines.
pub fn run_single(
    records: &[EvalRecord],
    mut engine_factory: impl FnMut() -> Result<EditEngine, Error>,
) -> Result<MetricReport, Error> {
    check_records(records)?;
    let mut evaluation = Evaluation::default();
    for record in records {
        let mut engine = engine_factory()?;
        if !engine.memory().is_empty() {
            return Err(Error::InvalidInput(
                "single-setting engine factory must produce an empty engine".into(),
            ));
        }
        apply_record_edit(&mut engine, record)?;
        evaluation.evaluate_record(&engine, record)?;
    }
    evaluation.into_report("single")
}

/// Sequential editing: apply every edit in order, then evaluate all records
/// against the final memory.
pub fn run_sequential(
    records: &[EvalRecord],
    engine: &mut EditEngine,
) -> Result<MetricReport, Error> {
    check_records(records)?;
    for record in records {
        apply_record_edit(engine, record)?;
    }
    let mut evaluation = Evaluation::default();
    for record in records {
        evaluation.evaluate_record(engine, record)?;
    }
    evaluation.into_report("sequential")
}

/// Incremental editing: apply edit t, evaluate record t immediately, and
/// keep going; record t is scored against a memory of exactly t edits.
pub fn run_incremental(
    records: &[EvalRecord],
    engine: &mut EditEngine,
) -> Result<MetricReport, Error> {
    check_records(records)?;
    let mut evaluation = Evaluation::default();
    for record in records {
        apply_record_edit(engine, record)?;
        evaluation.evaluate_record(engine, record)?;
    }
    evaluation.into_report("incremental")
}

fn check_records(records: &[EvalRecord]) -> Result<(), Error> {
    if records.is_empty() {
        return Err(Error::InvalidInput("evaluation needs at least one record".into()));
    }
    Ok(())
}

fn apply_record_edit(engine: &mut EditEngine, record: &EvalRecord) -> Result<(), Error> {
    engine.apply_edit(Some(record.edit.id.clone()), &record.edit.query, &record.edit.answer)?;
    Ok(())
}

/// Accumulates outcomes and the decision log across records. Locality
/// references are pre-edit base answers, cached per query text so repeated
/// probes cost one backend call.
#[derive(Default)]
struct Evaluation {
    outcomes: Vec<RecordOutcome>,
    decisions: Vec<DecisionLogEntry>,
    base_reference: HashMap<String, String>,
}

impl Evaluation {
    fn evaluate_record(&mut self, engine: &EditEngine, record: &EvalRecord) -> Result<(), Error> {
        let routed = engine.answer(&record.edit.query)?;
        let edit_ok = answer_match(&routed.answer, &record.edit.answer)?;
        self.log(record, "edit", &record.edit.query, &routed);

        let mut locality_ok = Vec::with_capacity(record.locality_queries.len());
        for query in &record.locality_queries {
            let reference = match self.base_reference.get(query) {
                Some(cached) => cached.clone(),
                None => {
                    let fresh = engine.base_backend().complete(query)?;
                    self.base_reference.insert(query.clone(), fresh.clone());
                    fresh
                }
            };
            let routed = engine.answer(query)?;
            locality_ok.push(routed.answer == reference);
            self.log(record, "locality", query, &routed);
        }

        let mut portability_ok = Vec::with_capacity(record.portability_pairs.len());
        for (query, answer) in &record.portability_pairs {
            let routed = engine.answer(query)?;
            portability_ok.push(answer_match(&routed.answer, answer)?);
            self.log(record, "portability", query, &routed);
        }

        self.outcomes.push(RecordOutcome {
            id: record.edit.id.clone(),
            edit_ok,
            locality_ok,
            portability_ok,
        });
        Ok(())
    }

    fn log(&mut self, record: &EvalRecord, kind: &str, query: &str, routed: &RoutedAnswer) {
        self.decisions.push(DecisionLogEntry {
            record_id: record.edit.id.clone(),
            query_kind: kind.to_string(),
            query: query.to_string(),
            answer: routed.answer.clone(),
            path: routed.decision.path,
            matched_edit_id: routed.decision.matched_edit.as_ref().map(|e| e.id.clone()),
            similarity: routed.decision.similarity,
        });
    }

    fn into_report(self, setting: &str) -> Result<MetricReport, Error> {
        let edit_success = percentage(self.outcomes.iter().map(|o| o.edit_ok));
        let locality = optional_percentage(self.outcomes.iter().flat_map(|o| o.locality_ok.iter().copied()));
        let portability =
            optional_percentage(self.outcomes.iter().flat_map(|o| o.portability_ok.iter().copied()));

        let mut components = vec![edit_success];
        components.extend(locality);
        components.extend(portability);
        let hm = if components.len() == 1 { edit_success } else { harmonic_mean(&components)? };

        Ok(MetricReport {
            setting: setting.to_string(),
            edit_success,
            locality,
            portability,
            harmonic_mean: hm,
            records: self.outcomes,
            decisions: self.decisions,
        })
    }
}

fn percentage(outcomes: impl Iterator<Item = bool>) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for ok in outcomes {
        total += 1;
        if ok {
            hits += 1;
        }
    }
    100.0 * hits as f64 / total as f64
}

fn optional_percentage(outcomes: impl Iterator<Item = bool>) -> Option<f64> {
    let collected: Vec<bool> = outcomes.collect();
    if collected.is_empty() {
        None
    } else {
        Some(percentage(collected.into_iter()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock_backends;
    use crate::edit::Edit;
    use crate::embed::NgramEmbedder;
    use crate::engine::Augmenter;
    use crate::filter::{AcceptAll, RejectAll, RelevanceFilter};

    fn engine_with(filter: Box<dyn RelevanceFilter>) -> EditEngine {
        let (base, aligned) = mock_backends();
        EditEngine::new(
            Box::new(NgramEmbedder::default()),
            filter,
            Augmenter::RuleBased,
            Box::new(base),
            Box::new(aligned),
            4,
        )
        .unwrap()
    }

    const LAUNCH_NAMES: [&str; 10] = [
        "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india",
        "juliet",
    ];

    fn corpus(n: usize) -> Vec<EvalRecord> {
        LAUNCH_NAMES
            .iter()
            .take(n)
            .enumerate()
            .map(|(index, name)| {
                let id = format!("r{}", index + 1);
                EvalRecord {
                    edit: Edit::new(
                        &id,
                        format!("What is the codename of launch {name}?"),
                        format!("Skylark-{name}"),
                        index as u64 + 1,
                    )
                    .unwrap(),
                    locality_queries: vec![format!("How tall is mountain {name}?")],
                    portability_pairs: vec![(
                        format!("What is the codename of launch {name}? Tell me."),
                        format!("Skylark-{name}"),
                    )],
                }
            })
            .collect()
    }

    #[test]
    fn single_setting_isolates_each_record() {
        let records = corpus(3);
        let report = run_single(&records, || Ok(engine_with(Box::new(AcceptAll)))).unwrap();
        assert_eq!(report.edit_success, 100.0);
        assert_eq!(report.records.len(), 3);
        // Every aligned decision matched the record's own edit.
        for entry in report.decisions.iter().filter(|d| d.path == RoutePath::Aligned) {
            assert_eq!(entry.matched_edit_id.as_deref(), Some(entry.record_id.as_str()));
        }
    }

    #[test]
    fn single_with_one_record_equals_sequential() {
        let records = corpus(1);
        let single = run_single(&records, || Ok(engine_with(Box::new(AcceptAll)))).unwrap();
        let mut engine = engine_with(Box::new(AcceptAll));
        let sequential = run_sequential(&records, &mut engine).unwrap();
        assert_eq!(single.edit_success, sequential.edit_success);
        assert_eq!(single.locality, sequential.locality);
        assert_eq!(single.portability, sequential.portability);
        assert_eq!(single.harmonic_mean, sequential.harmonic_mean);
    }

    #[test]
    fn sequential_and_incremental_agree_on_final_memory() {
        let records = corpus(10);
        let mut seq_engine = engine_with(Box::new(AcceptAll));
        let seq = run_sequential(&records, &mut seq_engine).unwrap();
        let mut inc_engine = engine_with(Box::new(AcceptAll));
        let inc = run_incremental(&records, &mut inc_engine).unwrap();

        assert_eq!(seq_engine.memory(), inc_engine.memory());
        assert_eq!(seq_engine.memory().current_step(), 10);
        assert_eq!(seq.edit_success, 100.0);
        assert_eq!(inc.edit_success, 100.0);
    }

    #[test]
    fn reject_all_filter_gives_perfect_locality() {
        let records = corpus(5);
        let mut engine = engine_with(Box::new(RejectAll));
        let report = run_sequential(&records, &mut engine).unwrap();
        assert_eq!(report.locality, Some(100.0));
        assert_eq!(report.edit_success, 0.0);
        assert_eq!(report.harmonic_mean, 0.0);
    }

    #[test]
    fn reports_are_deterministic() {
        let records = corpus(4);
        let mut a_engine = engine_with(Box::new(AcceptAll));
        let a = run_sequential(&records, &mut a_engine).unwrap();
        let mut b_engine = engine_with(Box::new(AcceptAll));
        let b = run_sequential(&records, &mut b_engine).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn metrics_are_absent_when_their_queries_are() {
        let mut records = corpus(2);
        for record in &mut records {
            record.locality_queries.clear();
            record.portability_pairs.clear();
        }
        let mut engine = engine_with(Box::new(AcceptAll));
        let report = run_sequential(&records, &mut engine).unwrap();
        assert_eq!(report.locality, None);
        assert_eq!(report.portability, None);
        assert_eq!(report.harmonic_mean, report.edit_success);
    }

    #[test]
    fn empty_record_sets_are_rejected() {
        assert!(run_single(&[], || Ok(engine_with(Box::new(AcceptAll)))).is_err());
        let mut engine = engine_with(Box::new(AcceptAll));
        assert!(run_sequential(&[], &mut engine).is_err());
        assert!(run_incremental(&[], &mut engine).is_err());
    }
}
