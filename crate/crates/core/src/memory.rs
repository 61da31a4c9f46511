//! Append-only store of augmented edit forms with their embeddings, plus
//! line-delimited snapshot persistence.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::edit::{AugmentedEdit, Edit, EditForm};
use crate::embed::{embed_normalized, EmbeddingBackend};
use crate::error::Error;

const SNAPSHOT_VERSION: u32 = 1;
const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// One stored rendering of an edit: its text and unit-norm embedding,
/// tagged with the parent edit and that edit's insertion step.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    pub edit_id: String,
    pub step: u64,
    pub form: EditForm,
    pub text: String,
    pub embedding: Vec<f64>,
}

/// Counts reported by [`Memory::stats`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryStats {
    pub edit_count: usize,
    pub entry_count: usize,
    pub current_step: u64,
    pub dimension: usize,
}

/// The edit memory: an append-only list of embedded forms and the map back
/// to the original edits. Entries are never removed or reordered, so a
/// reader always sees a prefix-consistent view.
#[derive(Debug, Clone, PartialEq)]
pub struct Memory {
    entries: Vec<MemoryEntry>,
    edits: HashMap<String, Edit>,
    current_step: u64,
    dimension: usize,
    embedder_name: String,
}

impl Memory {
    /// An empty memory bound to the embedder's dimension and name.
    pub fn new(embedder: &dyn EmbeddingBackend) -> Self {
        Memory {
            entries: Vec::new(),
            edits: HashMap::new(),
            current_step: 0,
            dimension: embedder.dimension(),
            embedder_name: embedder.name().to_string(),
        }
    }

    /// Embeds and appends every form of one augmented edit.
    ///
    /// The edit's step must be exactly `current_step() + 1`. All forms are
    /// embedded before anything is stored, so an embedder failure leaves
    /// the memory untouched. Returns the number of entries appended.
    pub fn insert_edit(
        &mut self,
        edit: &Edit,
        augmented: &AugmentedEdit,
        embedder: &dyn EmbeddingBackend,
    ) -> Result<usize, Error> {
        edit.validate()?;
        if augmented.edit_id() != edit.id {
            return Err(Error::InvalidInput(format!(
                "augmented forms belong to edit '{}', not '{}'",
                augmented.edit_id(),
                edit.id
            )));
        }
        if self.edits.contains_key(&edit.id) {
            return Err(Error::InvalidInput(format!("edit '{}' is already stored", edit.id)));
        }
        if edit.step != self.current_step + 1 {
            return Err(Error::InvalidInput(format!(
                "edit '{}' has step {}, expected {}",
                edit.id,
                edit.step,
                self.current_step + 1
            )));
        }
        if embedder.dimension() != self.dimension || embedder.name() != self.embedder_name {
            return Err(Error::InvalidInput(format!(
                "memory was built with embedder '{}' (dimension {}), got '{}' (dimension {})",
                self.embedder_name,
                self.dimension,
                embedder.name(),
                embedder.dimension()
            )));
        }

        let mut staged = Vec::with_capacity(augmented.forms().len());
        for (form, text) in augmented.forms() {
            let embedding = embed_normalized(embedder, text)?;
            staged.push(MemoryEntry {
                edit_id: edit.id.clone(),
                step: edit.step,
                form: *form,
                text: text.clone(),
                embedding,
            });
        }
        let appended = staged.len();
        self.entries.extend(staged);
        self.edits.insert(edit.id.clone(), edit.clone());
        self.current_step = edit.step;
        Ok(appended)
    }

    /// All stored entries in insertion order.
    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// The original edit a stored entry points back to.
    pub fn edit(&self, edit_id: &str) -> Option<&Edit> {
        self.edits.get(edit_id)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embedder_name(&self) -> &str {
        &self.embedder_name
    }

    pub fn stats(&self) -> MemoryStats {
        MemoryStats {
            edit_count: self.edits.len(),
            entry_count: self.entries.len(),
            current_step: self.current_step,
            dimension: self.dimension,
        }
    }

    /// Writes the memory to a line-delimited snapshot file: one header
    /// line, then one line per entry.
    pub fn snapshot(&self, path: &Path) -> Result<(), Error> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = std::fs::File::create(path)?;
        self.write_snapshot(BufWriter::new(file))
    }

    /// Serializes the snapshot to any writer. QA lines carry the original
    /// query and answer so the edit map can be rebuilt on load.
    pub fn write_snapshot<W: Write>(&self, mut writer: W) -> Result<(), Error> {
        let header = SnapshotHeader {
            version: SNAPSHOT_VERSION,
            dimension: self.dimension,
            embedder_name: self.embedder_name.clone(),
        };
        serde_json::to_writer(&mut writer, &header).map_err(|e| Error::schema(e.to_string()))?;
        writer.write_all(b"\n")?;
        for entry in &self.entries {
            let edit = self.edits.get(&entry.edit_id);
            let line = SnapshotLine {
                edit_id: entry.edit_id.clone(),
                step: entry.step,
                form_kind: entry.form,
                text: entry.text.clone(),
                query: edit.filter(|_| entry.form == EditForm::Qa).map(|e| e.query.clone()),
                answer: edit.filter(|_| entry.form == EditForm::Qa).map(|e| e.answer.clone()),
                embedding: entry.embedding.clone(),
            };
            serde_json::to_writer(&mut writer, &line).map_err(|e| Error::schema(e.to_string()))?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Loads a snapshot written by [`Memory::snapshot`], validating it
    /// against the embedder that will serve it.
    pub fn load(path: &Path, embedder: &dyn EmbeddingBackend) -> Result<Self, Error> {
        let file = std::fs::File::open(path)?;
        Self::read_snapshot(BufReader::new(file), embedder)
    }

    /// Parses a snapshot from any reader. Errors carry the 1-based line
    /// number of the offending record.
    pub fn read_snapshot<R: BufRead>(reader: R, embedder: &dyn EmbeddingBackend) -> Result<Self, Error> {
        let mut lines = reader.lines();
        let header_text = match lines.next() {
            Some(line) => line?,
            None => return Err(Error::schema_at(1, "snapshot is empty, expected a header")),
        };
        let header: SnapshotHeader = serde_json::from_str(&header_text)
            .map_err(|e| Error::schema_at(1, format!("bad header: {e}")))?;
        if header.version != SNAPSHOT_VERSION {
            return Err(Error::schema_at(
                1,
                format!("unsupported snapshot version {}, expected {SNAPSHOT_VERSION}", header.version),
            ));
        }
        if header.dimension != embedder.dimension() {
            return Err(Error::DimensionMismatch {
                expected: embedder.dimension(),
                actual: header.dimension,
            });
        }
        if header.embedder_name != embedder.name() {
            return Err(Error::schema_at(
                1,
                format!(
                    "snapshot was written by embedder '{}', loaded with '{}'",
                    header.embedder_name,
                    embedder.name()
                ),
            ));
        }

        let mut memory = Memory {
            entries: Vec::new(),
            edits: HashMap::new(),
            current_step: 0,
            dimension: header.dimension,
            embedder_name: header.embedder_name,
        };
        let mut entry_lines = Vec::new();
        let mut last_first_seen_step = 0u64;
        for (index, line) in lines.enumerate() {
            let line_no = index + 2;
            let text = line?;
            if text.trim().is_empty() {
                return Err(Error::schema_at(line_no, "blank line in snapshot"));
            }
            let record: SnapshotLine = serde_json::from_str(&text)
                .map_err(|e| Error::schema_at(line_no, e.to_string()))?;
            if record.text.trim().is_empty() {
                return Err(Error::schema_at(line_no, "entry text is empty"));
            }
            if record.embedding.len() != memory.dimension {
                return Err(Error::schema_at(
                    line_no,
                    format!(
                        "embedding has {} components, expected {}",
                        record.embedding.len(),
                        memory.dimension
                    ),
                ));
            }
            let norm: f64 = record.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::schema_at(line_no, format!("embedding norm {norm} is not 1")));
            }
            if record.form_kind == EditForm::Qa {
                let (query, answer) = match (&record.query, &record.answer) {
                    (Some(q), Some(a)) => (q.clone(), a.clone()),
                    _ => {
                        return Err(Error::schema_at(
                            line_no,
                            "qa line lacks the query/answer fields",
                        ))
                    }
                };
                let edit = Edit::new(&record.edit_id, query, answer, record.step)
                    .map_err(|e| Error::schema_at(line_no, e.to_string()))?;
                if memory.edits.insert(record.edit_id.clone(), edit).is_some() {
                    return Err(Error::schema_at(
                        line_no,
                        format!("duplicate qa line for edit '{}'", record.edit_id),
                    ));
                }
                if record.step <= last_first_seen_step {
                    return Err(Error::schema_at(
                        line_no,
                        format!(
                            "edit '{}' has step {}, not above the previous edit's step {}",
                            record.edit_id, record.step, last_first_seen_step
                        ),
                    ));
                }
                last_first_seen_step = record.step;
            }
            entry_lines.push((line_no, record));
        }

        for (line_no, record) in entry_lines {
            let edit = memory.edits.get(&record.edit_id).ok_or_else(|| {
                Error::schema_at(line_no, format!("edit '{}' has no qa line", record.edit_id))
            })?;
            if edit.step != record.step {
                return Err(Error::schema_at(
                    line_no,
                    format!(
                        "entry step {} disagrees with edit '{}' step {}",
                        record.step, record.edit_id, edit.step
                    ),
                ));
            }
            memory.entries.push(MemoryEntry {
                edit_id: record.edit_id,
                step: record.step,
                form: record.form_kind,
                text: record.text,
                embedding: record.embedding,
            });
        }
        memory.current_step = memory.edits.values().map(|e| e.step).max().unwrap_or(0);
        Ok(memory)
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    version: u32,
    dimension: usize,
    embedder_name: String,
}

#[derive(Serialize, Deserialize)]
struct SnapshotLine {
    edit_id: String,
    step: u64,
    form_kind: EditForm,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    query: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer: Option<String>,
    embedding: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::augment_rule_based;
    use crate::embed::NgramEmbedder;

    fn six_form_edit(id: &str, step: u64) -> (Edit, AugmentedEdit) {
        let edit = Edit::new(id, format!("What is fact {id}?"), format!("value-{id}"), step).unwrap();
        let forms = vec![
            (EditForm::Qa, format!("What is fact {id}? value-{id}")),
            (EditForm::Declarative, format!("Fact {id} is value-{id}.")),
            (EditForm::Paraphrased(1), format!("The value of fact {id} is value-{id}.")),
            (EditForm::Paraphrased(2), format!("value-{id} is what fact {id} equals.")),
            (EditForm::Paraphrased(3), format!("Fact {id} equals value-{id}.")),
            (EditForm::Reversed, format!("value-{id} is fact {id}.")),
        ];
        let augmented = AugmentedEdit::new(id, forms).unwrap();
        (edit, augmented)
    }

    #[test]
    fn insert_counts_entries_and_advances_the_step() {
        let embedder = NgramEmbedder::default();
        let mut memory = Memory::new(&embedder);

        let (e1, a1) = six_form_edit("e1", 1);
        assert_eq!(memory.insert_edit(&e1, &a1, &embedder).unwrap(), 6);
        assert_eq!(memory.entries().len(), 6);
        assert_eq!(memory.current_step(), 1);

        let (e2, a2) = six_form_edit("e2", 2);
        memory.insert_edit(&e2, &a2, &embedder).unwrap();
        assert_eq!(memory.entries().len(), 12);
        assert_eq!(memory.current_step(), 2);
        assert_eq!(memory.edit("e1").unwrap().answer, "value-e1");
    }

    #[test]
    fn insert_rejects_out_of_order_steps_and_duplicates() {
        let embedder = NgramEmbedder::default();
        let mut memory = Memory::new(&embedder);
        let (e1, a1) = six_form_edit("e1", 2);
        assert!(memory.insert_edit(&e1, &a1, &embedder).is_err());

        let (e1, a1) = six_form_edit("e1", 1);
        memory.insert_edit(&e1, &a1, &embedder).unwrap();
        let (dup, adup) = six_form_edit("e1", 2);
        assert!(memory.insert_edit(&dup, &adup, &embedder).is_err());
    }

    #[test]
    fn a_failing_embedder_leaves_memory_untouched() {
        struct FailsAfter {
            inner: NgramEmbedder,
            calls: std::sync::Mutex<usize>,
            limit: usize,
        }
        impl EmbeddingBackend for FailsAfter {
            fn name(&self) -> &str {
                self.inner.name()
            }
            fn dimension(&self) -> usize {
                self.inner.dimension()
            }
            fn embed(&self, text: &str) -> Result<Vec<f64>, Error> {
                let mut calls = self.calls.lock().unwrap();
                *calls += 1;
                if *calls > self.limit {
                    return Err(Error::Embedding("injected failure".into()));
                }
                self.inner.embed(text)
            }
        }

        let embedder = FailsAfter {
            inner: NgramEmbedder::default(),
            calls: std::sync::Mutex::new(0),
            limit: 2,
        };
        let mut memory = Memory::new(&embedder);
        let (e1, a1) = six_form_edit("e1", 1);
        assert!(memory.insert_edit(&e1, &a1, &embedder).is_err());
        assert!(memory.is_empty());
        assert_eq!(memory.current_step(), 0);
        assert_eq!(memory.stats().edit_count, 0);
    }

    #[test]
    fn stats_match_the_counting_contract() {
        let embedder = NgramEmbedder::default();
        let mut memory = Memory::new(&embedder);
        let stats = memory.stats();
        assert_eq!((stats.edit_count, stats.entry_count, stats.current_step), (0, 0, 0));
        assert_eq!(stats.dimension, 256);

        let (e1, a1) = six_form_edit("e1", 1);
        memory.insert_edit(&e1, &a1, &embedder).unwrap();
        let stats = memory.stats();
        assert_eq!((stats.edit_count, stats.entry_count, stats.current_step), (1, 6, 1));

        for step in 2..=5u64 {
            let id = format!("r{step}");
            let edit = Edit::new(&id, format!("Query {id}?"), format!("answer {id}"), step).unwrap();
            let augmented = augment_rule_based(&edit);
            memory.insert_edit(&edit, &augmented, &embedder).unwrap();
        }
        let stats = memory.stats();
        assert_eq!(stats.edit_count, 5);
        assert_eq!(stats.entry_count, 6 + 4 * 4);
        assert_eq!(stats.current_step, 5);
    }

    #[test]
    fn snapshot_round_trip_is_exact() {
        let embedder = NgramEmbedder::default();
        let mut memory = Memory::new(&embedder);
        let (e1, a1) = six_form_edit("e1", 1);
        let (e2, a2) = six_form_edit("e2", 2);
        memory.insert_edit(&e1, &a1, &embedder).unwrap();
        memory.insert_edit(&e2, &a2, &embedder).unwrap();

        let mut buffer = Vec::new();
        memory.write_snapshot(&mut buffer).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert_eq!(text.lines().count(), 13);

        let loaded = Memory::read_snapshot(buffer.as_slice(), &embedder).unwrap();
        assert_eq!(loaded, memory);
    }

    #[test]
    fn empty_snapshot_round_trips() {
        let embedder = NgramEmbedder::default();
        let memory = Memory::new(&embedder);
        let mut buffer = Vec::new();
        memory.write_snapshot(&mut buffer).unwrap();
        assert_eq!(String::from_utf8(buffer.clone()).unwrap().lines().count(), 1);
        let loaded = Memory::read_snapshot(buffer.as_slice(), &embedder).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(loaded, memory);
    }

    #[test]
    fn load_rejects_a_dimension_mismatch() {
        let writer = NgramEmbedder::new(384).unwrap();
        let mut buffer = Vec::new();
        Memory::new(&writer).write_snapshot(&mut buffer).unwrap();

        let reader = NgramEmbedder::default();
        let err = Memory::read_snapshot(buffer.as_slice(), &reader).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 256, actual: 384 }));
    }

    #[test]
    fn load_rejects_a_malformed_line_with_its_number() {
        let embedder = NgramEmbedder::default();
        let mut memory = Memory::new(&embedder);
        let (e1, a1) = six_form_edit("e1", 1);
        memory.insert_edit(&e1, &a1, &embedder).unwrap();

        let mut buffer = Vec::new();
        memory.write_snapshot(&mut buffer).unwrap();
        let mut lines: Vec<String> = String::from_utf8(buffer).unwrap().lines().map(String::from).collect();
        lines[2] = "{not json".into();
        let doctored = lines.join("\n");

        let err = Memory::read_snapshot(doctored.as_bytes(), &embedder).unwrap_err();
        assert!(err.to_string().contains("line 3"), "got: {err}");
    }

    #[test]
    fn load_rejects_an_entry_without_a_qa_line() {
        let embedder = NgramEmbedder::default();
        let mut memory = Memory::new(&embedder);
        let (e1, a1) = six_form_edit("e1", 1);
        memory.insert_edit(&e1, &a1, &embedder).unwrap();

        let mut buffer = Vec::new();
        memory.write_snapshot(&mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let without_qa: Vec<&str> =
            text.lines().enumerate().filter(|(i, _)| *i != 1).map(|(_, l)| l).collect();

        let err = Memory::read_snapshot(without_qa.join("\n").as_bytes(), &embedder).unwrap_err();
        assert!(err.to_string().contains("no qa line"), "got: {err}");
    }

    #[test]
    fn load_rejects_the_wrong_embedder_name() {
        let embedder = NgramEmbedder::default();
        let mut buffer = Vec::new();
        Memory::new(&embedder).write_snapshot(&mut buffer).unwrap();

        struct Renamed(NgramEmbedder);
        impl EmbeddingBackend for Renamed {
            fn name(&self) -> &str {
                "other-encoder"
            }
            fn dimension(&self) -> usize {
                self.0.dimension()
            }
            fn embed(&self, text: &str) -> Result<Vec<f64>, Error> {
                self.0.embed(text)
            }
        }
        let err = Memory::read_snapshot(buffer.as_slice(), &Renamed(NgramEmbedder::default()))
            .unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }
}
