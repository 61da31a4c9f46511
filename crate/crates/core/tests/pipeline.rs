//! End-to-end flows through the assembled engine.

use editgate_core::backend::{mock_backends, CompletionBackend};
use editgate_core::embed::NgramEmbedder;
use editgate_core::engine::{Augmenter, EditEngine};
use editgate_core::eval::answer_match;
use editgate_core::filter::{
    train_filter, AcceptAll, FilterTrainSample, SampleKind, TrainConfig,
};
use editgate_core::memory::Memory;
use editgate_core::router::RoutePath;

fn mock_engine() -> EditEngine {
    let (base, aligned) = mock_backends();
    EditEngine::new(
        Box::new(NgramEmbedder::new(NgramEmbedder::DEFAULT_DIMENSION).unwrap()),
        Box::new(AcceptAll),
        Augmenter::RuleBased,
        Box::new(base),
        Box::new(aligned),
        4,
    )
    .unwrap()
}

#[test]
fn edits_answer_and_an_empty_memory_passes_through() {
    let mut engine = mock_engine();
    let unrelated = "How many moons does Saturn have?";
    let (reference_base, _) = mock_backends();
    let routed = engine.answer(unrelated).unwrap();
    assert_eq!(routed.decision.path, RoutePath::Base);
    assert_eq!(routed.answer, reference_base.complete(unrelated).unwrap());
    assert_eq!(routed.prompt_used, unrelated);

    let edits = [
        ("What is the capital of Freedonia?", "Fredville"),
        ("Who wrote the Zenith Codex?", "Mira Voss"),
        ("What is the boiling point of oganesson?", "350 kelvin"),
    ];
    for (query, answer) in edits {
        let applied = engine.apply_edit(None, query, answer).unwrap();
        assert_eq!(applied.forms_stored, 4);
    }

    for (query, answer) in edits {
        let routed = engine.answer(query).unwrap();
        assert_eq!(routed.decision.path, RoutePath::Aligned);
        assert!(answer_match(&routed.answer, answer).unwrap());
    }
}

#[test]
fn edits_and_queries_interleave() {
    let mut engine = mock_engine();
    let first = ("What is the capital of Freedonia?", "Fredville");
    let second = ("Who wrote the Zenith Codex?", "Mira Voss");

    engine.apply_edit(None, first.0, first.1).unwrap();
    let routed = engine.answer(first.0).unwrap();
    assert_eq!(routed.decision.path, RoutePath::Aligned);
    assert!(answer_match(&routed.answer, first.1).unwrap());

    let before = engine.answer(second.0).unwrap();
    assert!(
        !answer_match(&before.answer, second.1).unwrap(),
        "the second edit must be invisible before it is applied, got {:?}",
        before.answer
    );

    let applied = engine.apply_edit(None, second.0, second.1).unwrap();
    let after = engine.answer(second.0).unwrap();
    assert_eq!(after.decision.path, RoutePath::Aligned);
    assert!(answer_match(&after.answer, second.1).unwrap());
    assert_eq!(
        after.decision.matched_edit.as_ref().map(|e| e.id.as_str()),
        Some(applied.edit.id.as_str())
    );

    assert!(answer_match(&engine.answer(first.0).unwrap().answer, first.1).unwrap());
    assert_eq!(engine.stats().edit_count, 2);
    assert_eq!(engine.stats().current_step, 2);
}

#[test]
fn trained_filter_separates_edit_queries_from_chatter() {
    let mut engine = mock_engine();
    let edits = [
        ("What is the capital of Freedonia?", "Fredville"),
        ("Who wrote the Zenith Codex?", "Mira Voss"),
    ];
    for (query, answer) in edits {
        engine.apply_edit(None, query, answer).unwrap();
    }

    let chatter = [
        "please draft a short birthday greeting",
        "convert twelve pounds to kilograms",
        "recommend a quiet jazz record",
        "how do i reverse a linked list in rust",
    ];
    let mut samples = Vec::new();
    for (query, answer) in edits {
        let stored = format!("{query} {answer}");
        samples.push(FilterTrainSample::new(query, stored.clone(), SampleKind::Edit).unwrap());
        for noise in chatter {
            samples.push(
                FilterTrainSample::new(noise, stored.clone(), SampleKind::General).unwrap(),
            );
        }
    }

    let embedder = NgramEmbedder::new(NgramEmbedder::DEFAULT_DIMENSION).unwrap();
    let config = TrainConfig { general_sample_rate: 1.0, epochs: 400, ..TrainConfig::default() };
    let report = train_filter(&samples, &embedder, &config).unwrap();
    engine.replace_filter(Box::new(report.model));

    for (query, answer) in edits {
        let routed = engine.answer(query).unwrap();
        assert_eq!(routed.decision.path, RoutePath::Aligned, "edit query must route aligned");
        assert!(answer_match(&routed.answer, answer).unwrap());
    }
    for noise in chatter {
        let routed = engine.answer(noise).unwrap();
        assert_eq!(routed.decision.path, RoutePath::Base, "chatter must route to base: {noise}");
    }
}

#[test]
fn snapshot_survives_engine_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("memory.snapshot");

    let mut engine = mock_engine();
    engine.apply_edit(Some("city".into()), "What is the capital of Freedonia?", "Fredville").unwrap();
    engine.apply_edit(Some("book".into()), "Who wrote the Zenith Codex?", "Mira Voss").unwrap();
    engine.snapshot(&path).unwrap();
    let before = engine.answer("Who wrote the Zenith Codex?").unwrap();

    let embedder = NgramEmbedder::new(NgramEmbedder::DEFAULT_DIMENSION).unwrap();
    let memory = Memory::load(&path, &embedder).unwrap();
    let (base, aligned) = mock_backends();
    let restored = EditEngine::with_memory(
        Box::new(embedder),
        Box::new(AcceptAll),
        Augmenter::RuleBased,
        Box::new(base),
        Box::new(aligned),
        4,
        memory,
    )
    .unwrap();

    assert_eq!(restored.stats(), engine.stats());
    let after = restored.answer("Who wrote the Zenith Codex?").unwrap();
    assert_eq!(after.answer, before.answer);
    assert_eq!(after.decision, before.decision);
    assert_eq!(
        after.decision.matched_edit.as_ref().map(|e| e.id.as_str()),
        Some("book")
    );
}
