//! Adaptive routing: decide per query whether any stored edit applies, and
//! dispatch to the base backend (untouched query) or the aligned backend
//! (query prefixed with the matched edit).

use serde::{Deserialize, Serialize};

use crate::augment::render_qa;
use crate::backend::CompletionBackend;
use crate::edit::Edit;
use crate::embed::{embed_normalized, EmbeddingBackend};
use crate::error::Error;
use crate::filter::{filter_candidates, select_best, RelevanceFilter};
use crate::memory::Memory;
use crate::retrieval::retrieve_topk_embedded;

/// Literal prefix of the edit-injection prompt, including its trailing space.
pub const UPDATED_INFO_MARKER: &str = "[Updated Information] ";

/// Literal separator before the query line, including the newline.
pub const QUERY_MARKER: &str = "\n[Query] ";

/// Which backend a query was sent to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutePath {
    Base,
    Aligned,
}

impl RoutePath {
    pub fn label(&self) -> &'static str {
        match self {
            RoutePath::Base => "base",
            RoutePath::Aligned => "aligned",
        }
    }
}

/// Everything the router decided for one query. `matched_edit` is present
/// exactly when `path` is [`RoutePath::Aligned`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub path: RoutePath,
    pub matched_edit: Option<Edit>,
    pub similarity: Option<f64>,
    pub candidates_considered: usize,
    pub candidates_passed_filter: usize,
}

/// A completed routed query.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutedAnswer {
    pub answer: String,
    pub decision: RouteDecision,
    /// The exact text sent to the chosen backend: the raw query on the base
    /// path, the injection prompt on the aligned path.
    pub prompt_used: String,
}

/// Routing failure. Dispatch failures keep the decision that was already
/// made, so audits can still see which path the query was headed for.
#[derive(Debug, thiserror::Error)]
pub enum RouteError {
    /// The query never reached a backend (bad input, embedding or filter
    /// failure).
    #[error(transparent)]
    Prepare(Error),

    /// The chosen backend failed.
    #[error("routing failed on the {} path: {source}", .decision.path.label())]
    Dispatch {
        decision: RouteDecision,
        #[source]
        source: Error,
    },
}

impl From<RouteError> for Error {
    fn from(error: RouteError) -> Self {
        match error {
            RouteError::Prepare(inner) => inner,
            RouteError::Dispatch { source, .. } => source,
        }
    }
}

/// Builds the edit-injection prompt sent to the aligned backend:
/// `"[Updated Information] {edit}\n[Query] {query}"`, with the edit rendered
/// in its canonical QA form.
pub fn build_edit_prompt(edit: &Edit, query: &str) -> String {
    format!("{UPDATED_INFO_MARKER}{}{QUERY_MARKER}{query}", render_qa(edit))
}

/// Routes one query: retrieve the top-k memory entries, keep the ones the
/// filter accepts, and take the best survivor's parent edit. With no
/// survivor the raw query goes to the base backend; otherwise the aligned
/// backend gets the injection prompt.
#[allow(clippy::too_many_arguments)]
pub fn route(
    query: &str,
    memory: &Memory,
    embedder: &dyn EmbeddingBackend,
    filter: &dyn RelevanceFilter,
    k: usize,
    base: &dyn CompletionBackend,
    aligned: &dyn CompletionBackend,
) -> Result<RoutedAnswer, RouteError> {
    if query.trim().is_empty() {
        return Err(RouteError::Prepare(Error::InvalidInput("query must be non-empty".into())));
    }
    if k == 0 {
        return Err(RouteError::Prepare(Error::InvalidInput(
            "retrieval depth k must be at least 1".into(),
        )));
    }

    let (candidates_considered, selection, filtered_count) = if memory.is_empty() {
        (0, None, 0)
    } else {
        let query_embedding = embed_normalized(embedder, query).map_err(RouteError::Prepare)?;
        let candidates =
            retrieve_topk_embedded(&query_embedding, memory, k).map_err(RouteError::Prepare)?;
        let filtered = filter_candidates(filter, query, &query_embedding, &candidates)
            .map_err(RouteError::Prepare)?;
        let selection = select_best(&filtered, memory).map(|(edit, sim)| (edit.clone(), sim));
        (candidates.len(), selection, filtered.len())
    };

    match selection {
        None => {
            let decision = RouteDecision {
                path: RoutePath::Base,
                matched_edit: None,
                similarity: None,
                candidates_considered,
                candidates_passed_filter: filtered_count,
            };
            let answer = base
                .complete(query)
                .map_err(|source| RouteError::Dispatch { decision: decision.clone(), source })?;
            Ok(RoutedAnswer { answer, decision, prompt_used: query.to_string() })
        }
        Some((edit, similarity)) => {
            let prompt = build_edit_prompt(&edit, query);
            let decision = RouteDecision {
                path: RoutePath::Aligned,
                matched_edit: Some(edit),
                similarity: Some(similarity),
                candidates_considered,
                candidates_passed_filter: filtered_count,
            };
            let answer = aligned
                .complete(&prompt)
                .map_err(|source| RouteError::Dispatch { decision: decision.clone(), source })?;
            Ok(RoutedAnswer { answer, decision, prompt_used: prompt })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::augment_rule_based;
    use crate::backend::mock_backends;
    use crate::embed::NgramEmbedder;
    use crate::filter::{AcceptAll, RejectAll};

    fn memory_with_edit(embedder: &NgramEmbedder, query: &str, answer: &str) -> Memory {
        let mut memory = Memory::new(embedder);
        let edit = Edit::new("e1", query, answer, 1).unwrap();
        let augmented = augment_rule_based(&edit);
        memory.insert_edit(&edit, &augmented, embedder).unwrap();
        memory
    }

    #[test]
    fn prompt_template_is_exact() {
        let edit = Edit::new("e1", "The current US president is", "Donald Trump", 1).unwrap();
        assert_eq!(
            build_edit_prompt(&edit, "Who leads the USA?"),
            "[Updated Information] The current US president is Donald Trump\n[Query] Who leads the USA?"
        );
    }

    #[test]
    fn empty_memory_routes_to_base_with_the_raw_query() {
        let embedder = NgramEmbedder::default();
        let memory = Memory::new(&embedder);
        let (base, aligned) = mock_backends();
        let routed =
            route("Who leads the USA?", &memory, &embedder, &AcceptAll, 4, &base, &aligned).unwrap();
        assert_eq!(routed.decision.path, RoutePath::Base);
        assert_eq!(routed.answer, base.complete("Who leads the USA?").unwrap());
        assert_eq!(routed.prompt_used, "Who leads the USA?");
        assert_eq!(routed.decision.candidates_considered, 0);
        assert!(routed.decision.matched_edit.is_none());
    }

    #[test]
    fn matched_edit_routes_to_aligned_and_extracts_the_answer() {
        let embedder = NgramEmbedder::default();
        let memory = memory_with_edit(&embedder, "What year was JS 7.62 made?", "1963");
        let (base, aligned) = mock_backends();
        let routed = route(
            "What year was JS 7.62 made?",
            &memory,
            &embedder,
            &AcceptAll,
            4,
            &base,
            &aligned,
        )
        .unwrap();
        assert_eq!(routed.decision.path, RoutePath::Aligned);
        assert_eq!(routed.answer, "1963");
        assert_eq!(routed.decision.matched_edit.as_ref().unwrap().id, "e1");
        assert_eq!(routed.decision.candidates_considered, 4);
        assert!(routed.decision.candidates_passed_filter >= 1);
        assert!(routed.decision.similarity.unwrap() > 0.9);
        assert!(routed.prompt_used.starts_with("[Updated Information] "));
    }

    #[test]
    fn reject_all_filter_forces_the_base_path() {
        let embedder = NgramEmbedder::default();
        let memory = memory_with_edit(&embedder, "What year was JS 7.62 made?", "1963");
        let (base, aligned) = mock_backends();
        for query in ["What year was JS 7.62 made?", "anything else", "1963?"] {
            let routed =
                route(query, &memory, &embedder, &RejectAll, 4, &base, &aligned).unwrap();
            assert_eq!(routed.decision.path, RoutePath::Base);
            assert_eq!(routed.answer, base.complete(query).unwrap());
            assert_eq!(routed.decision.candidates_passed_filter, 0);
            assert!(routed.decision.candidates_considered > 0);
        }
    }

    #[test]
    fn aligned_prompts_contain_each_marker_exactly_once() {
        let embedder = NgramEmbedder::default();
        let memory = memory_with_edit(&embedder, "Where is the Sable Array telescope?", "Atacama");
        let (base, aligned) = mock_backends();
        let routed = route(
            "Where is the Sable Array telescope?",
            &memory,
            &embedder,
            &AcceptAll,
            4,
            &base,
            &aligned,
        )
        .unwrap();
        assert_eq!(routed.prompt_used.matches(UPDATED_INFO_MARKER).count(), 1);
        assert_eq!(routed.prompt_used.matches(QUERY_MARKER).count(), 1);
    }

    #[test]
    fn dispatch_failures_carry_the_decision() {
        struct Down;
        impl CompletionBackend for Down {
            fn name(&self) -> &str {
                "down"
            }
            fn complete(&self, _prompt: &str) -> Result<String, Error> {
                Err(Error::backend("down", "connection refused"))
            }
        }

        let embedder = NgramEmbedder::default();
        let memory = Memory::new(&embedder);
        let err = route("a query", &memory, &embedder, &AcceptAll, 4, &Down, &Down).unwrap_err();
        match err {
            RouteError::Dispatch { decision, .. } => assert_eq!(decision.path, RoutePath::Base),
            other => panic!("expected a dispatch error, got {other:?}"),
        }
    }

    #[test]
    fn blank_queries_and_zero_k_are_rejected() {
        let embedder = NgramEmbedder::default();
        let memory = Memory::new(&embedder);
        let (base, aligned) = mock_backends();
        assert!(route("   ", &memory, &embedder, &AcceptAll, 4, &base, &aligned).is_err());
        assert!(route("q", &memory, &embedder, &AcceptAll, 0, &base, &aligned).is_err());
    }
}
