//! The assembled engine: one memory plus the embedder, filter, augmenter,
//! and backend pair that serve it. Edits and queries may interleave freely;
//! a query issued after the t-th edit sees exactly the first t edits.

use std::path::Path;

use crate::augment::{augment_rule_based, augment_with_llm, PromptTemplates};
use crate::backend::CompletionBackend;
use crate::edit::{AugmentedEdit, Edit};
use crate::embed::EmbeddingBackend;
use crate::error::Error;
use crate::memory::{Memory, MemoryStats};
use crate::router::{route, RoutedAnswer, RouteError};
use crate::filter::RelevanceFilter;

/// How the engine renders incoming edits into stored forms.
pub enum Augmenter {
    /// Fixed offline templates; four forms per edit.
    RuleBased,
    /// Reword via a completion backend; six forms per edit on success.
    Llm { client: Box<dyn CompletionBackend>, templates: PromptTemplates },
}

impl Augmenter {
    pub fn augment(&self, edit: &Edit) -> Result<AugmentedEdit, Error> {
        match self {
            Augmenter::RuleBased => Ok(augment_rule_based(edit)),
            Augmenter::Llm { client, templates } => {
                augment_with_llm(edit, client.as_ref(), templates)
            }
        }
    }
}

/// Result of applying one edit.
#[derive(Debug, Clone, PartialEq)]
pub struct AppliedEdit {
    pub edit: Edit,
    pub forms_stored: usize,
}

/// A live editing engine.
pub struct EditEngine {
    memory: Memory,
    embedder: Box<dyn EmbeddingBackend>,
    filter: Box<dyn RelevanceFilter>,
    augmenter: Augmenter,
    base: Box<dyn CompletionBackend>,
    aligned: Box<dyn CompletionBackend>,
    k: usize,
}

impl EditEngine {
    /// An engine over a fresh empty memory.
    pub fn new(
        embedder: Box<dyn EmbeddingBackend>,
        filter: Box<dyn RelevanceFilter>,
        augmenter: Augmenter,
        base: Box<dyn CompletionBackend>,
        aligned: Box<dyn CompletionBackend>,
        k: usize,
    ) -> Result<Self, Error> {
        let memory = Memory::new(embedder.as_ref());
        Self::with_memory(embedder, filter, augmenter, base, aligned, k, memory)
    }

    /// An engine over an existing memory, e.g. one loaded from a snapshot.
    /// The memory must have been built by the same embedder.
    #[allow(clippy::too_many_arguments)]
    pub fn with_memory(
        embedder: Box<dyn EmbeddingBackend>,
        filter: Box<dyn RelevanceFilter>,
        augmenter: Augmenter,
        base: Box<dyn CompletionBackend>,
        aligned: Box<dyn CompletionBackend>,
        k: usize,
        memory: Memory,
    ) -> Result<Self, Error> {
        if k == 0 {
            return Err(Error::InvalidInput("retrieval depth k must be at least 1".into()));
        }
        if memory.dimension() != embedder.dimension() || memory.embedder_name() != embedder.name()
        {
            return Err(Error::InvalidInput(format!(
                "memory was built with embedder '{}' (dimension {}), engine uses '{}' (dimension {})",
                memory.embedder_name(),
                memory.dimension(),
                embedder.name(),
                embedder.dimension()
            )));
        }
        Ok(EditEngine { memory, embedder, filter, augmenter, base, aligned, k })
    }

    /// The id `apply_edit` would assign next if none is given: the first
    /// free `e{n}` counting from the upcoming step number.
    pub fn next_auto_id(&self) -> String {
        let mut n = self.memory.current_step() + 1;
        while self.memory.edit(&format!("e{n}")).is_some() {
            n += 1;
        }
        format!("e{n}")
    }

    /// Augments and stores one edit at the next step. Without an explicit
    /// id, the first free `e{n}` counting from the step number is assigned.
    pub fn apply_edit(
        &mut self,
        id: Option<String>,
        query: &str,
        answer: &str,
    ) -> Result<AppliedEdit, Error> {
        let step = self.memory.current_step() + 1;
        let id = id.unwrap_or_else(|| self.next_auto_id());
        let edit = Edit::new(id, query, answer, step)?;
        let augmented = self.augmenter.augment(&edit)?;
        let forms_stored = self.memory.insert_edit(&edit, &augmented, self.embedder.as_ref())?;
        Ok(AppliedEdit { edit, forms_stored })
    }

    /// Stores an edit whose forms were already rendered, e.g. read from an
    /// augmentation cache. The edit's step must be the next step.
    pub fn apply_prepared(&mut self, edit: &Edit, augmented: &AugmentedEdit) -> Result<usize, Error> {
        self.memory.insert_edit(edit, augmented, self.embedder.as_ref())
    }

    /// Routes one query against the current memory.
    pub fn answer(&self, query: &str) -> Result<RoutedAnswer, RouteError> {
        route(
            query,
            &self.memory,
            self.embedder.as_ref(),
            self.filter.as_ref(),
            self.k,
            self.base.as_ref(),
            self.aligned.as_ref(),
        )
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn stats(&self) -> MemoryStats {
        self.memory.stats()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The frozen base backend, exposed so evaluations can capture pre-edit
    /// reference answers.
    pub fn base_backend(&self) -> &dyn CompletionBackend {
        self.base.as_ref()
    }

    /// Swaps in a new relevance filter (e.g. freshly trained weights).
    pub fn replace_filter(&mut self, filter: Box<dyn RelevanceFilter>) {
        self.filter = filter;
    }

    /// Writes the memory to a snapshot file.
    pub fn snapshot(&self, path: &Path) -> Result<(), Error> {
        self.memory.snapshot(path)
    }
}
