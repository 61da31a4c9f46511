//! Core data model: a knowledge edit and its augmented surface forms.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// A single knowledge edit: a question together with the answer the system
/// must give from now on. `step` records the insertion order in memory and
/// is assigned when the edit is applied (1 for the first edit, then 2, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edit {
    pub id: String,
    pub query: String,
    pub answer: String,
    pub step: u64,
}

impl Edit {
    /// Builds a validated edit. The id, query, and answer must be non-empty
    /// after trimming; the stored fields keep their original spelling.
    pub fn new(
        id: impl Into<String>,
        query: impl Into<String>,
        answer: impl Into<String>,
        step: u64,
    ) -> Result<Self, Error> {
        let edit = Edit { id: id.into(), query: query.into(), answer: answer.into(), step };
        edit.validate()?;
        Ok(edit)
    }

    /// Checks the field-level invariants, for edits built by deserialization.
    pub fn validate(&self) -> Result<(), Error> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidInput("edit id must be non-empty".into()));
        }
        if self.query.trim().is_empty() {
            return Err(Error::InvalidInput(format!("edit '{}' has an empty query", self.id)));
        }
        if self.answer.trim().is_empty() {
            return Err(Error::InvalidInput(format!("edit '{}' has an empty answer", self.id)));
        }
        Ok(())
    }
}

/// The surface form of one stored rendering of an edit.
///
/// Every augmented edit has exactly one [`EditForm::Qa`] rendering; the
/// other forms are optional restatements that widen retrieval coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EditForm {
    /// The original question-answer pair, rendered as one string.
    Qa,
    /// The edit restated as a single declarative sentence.
    Declarative,
    /// One of up to three reworded questions (index 1 through 3).
    Paraphrased(u8),
    /// The edit restated answer-first.
    Reversed,
}

impl EditForm {
    /// Builds a paraphrase form, checking the 1-based index.
    pub fn paraphrased(index: u8) -> Result<Self, Error> {
        if (1..=3).contains(&index) {
            Ok(EditForm::Paraphrased(index))
        } else {
            Err(Error::InvalidInput(format!("paraphrase index {index} out of range 1..=3")))
        }
    }

    /// The stable label used in snapshots and augmentation caches.
    pub fn label(&self) -> String {
        match self {
            EditForm::Qa => "qa".into(),
            EditForm::Declarative => "declarative".into(),
            EditForm::Paraphrased(i) => format!("paraphrased-{i}"),
            EditForm::Reversed => "reversed".into(),
        }
    }

    /// Parses a label produced by [`EditForm::label`].
    pub fn parse_label(label: &str) -> Result<Self, Error> {
        match label {
            "qa" => Ok(EditForm::Qa),
            "declarative" => Ok(EditForm::Declarative),
            "paraphrased-1" => Ok(EditForm::Paraphrased(1)),
            "paraphrased-2" => Ok(EditForm::Paraphrased(2)),
            "paraphrased-3" => Ok(EditForm::Paraphrased(3)),
            "reversed" => Ok(EditForm::Reversed),
            other => Err(Error::schema(format!("unknown edit form '{other}'"))),
        }
    }
}

impl Serialize for EditForm {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for EditForm {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let label = String::deserialize(deserializer)?;
        EditForm::parse_label(&label).map_err(D::Error::custom)
    }
}

/// An edit together with the rendered texts that will be embedded and
/// stored. Construction enforces the form invariants, so a value of this
/// type is always safe to insert into memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedEdit {
    edit_id: String,
    forms: Vec<(EditForm, String)>,
}

impl AugmentedEdit {
    /// Maximum number of stored renderings per edit: the QA form, one
    /// declarative form, three paraphrases, and one reversed form.
    pub const MAX_FORMS: usize = 6;

    /// Builds a validated set of forms for one edit.
    ///
    /// Requires exactly one QA form, at most one rendering per form kind,
    /// and non-empty text for every rendering.
    pub fn new(edit_id: impl Into<String>, forms: Vec<(EditForm, String)>) -> Result<Self, Error> {
        let edit_id = edit_id.into();
        if edit_id.trim().is_empty() {
            return Err(Error::InvalidInput("augmented edit id must be non-empty".into()));
        }
        if forms.len() > Self::MAX_FORMS {
            return Err(Error::InvalidInput(format!(
                "edit '{edit_id}' has {} forms, more than the maximum of {}",
                forms.len(),
                Self::MAX_FORMS
            )));
        }
        let mut seen = Vec::new();
        let mut qa_count = 0usize;
        for (form, text) in &forms {
            if let EditForm::Paraphrased(i) = form {
                if !(1..=3).contains(i) {
                    return Err(Error::InvalidInput(format!(
                        "edit '{edit_id}' has paraphrase index {i} out of range 1..=3"
                    )));
                }
            }
            if seen.contains(form) {
                return Err(Error::InvalidInput(format!(
                    "edit '{edit_id}' has duplicate form '{}'",
                    form.label()
                )));
            }
            seen.push(*form);
            if text.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "edit '{edit_id}' has empty text for form '{}'",
                    form.label()
                )));
            }
            if *form == EditForm::Qa {
                qa_count += 1;
            }
        }
        if qa_count != 1 {
            return Err(Error::InvalidInput(format!(
                "edit '{edit_id}' must have exactly one qa form, found {qa_count}"
            )));
        }
        Ok(AugmentedEdit { edit_id, forms })
    }

    pub fn edit_id(&self) -> &str {
        &self.edit_id
    }

    /// The renderings in the order they will be inserted into memory.
    pub fn forms(&self) -> &[(EditForm, String)] {
        &self.forms
    }

    /// The text of the QA rendering.
    pub fn qa_text(&self) -> &str {
        self.forms
            .iter()
            .find(|(form, _)| *form == EditForm::Qa)
            .map(|(_, text)| text.as_str())
            .expect("construction guarantees one qa form")
    }
}
