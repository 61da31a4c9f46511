//! Dataset ingestion: the canonical line-delimited record format, a
//! configurable converter for third-party knowledge-editing exports, and
//! derivation of filter training samples from records.

use std::collections::HashSet;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::render_qa;
use crate::edit::Edit;
use crate::error::Error;
use crate::filter::{FilterTrainSample, SampleKind};

/// One evaluation instance: the edit to apply, queries whose behavior must
/// not change, and rephrased or derived queries the edit should transfer to.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub edit: Edit,
    pub locality_queries: Vec<String>,
    pub portability_pairs: Vec<(String, String)>,
}

/// Reads the canonical dataset file: one JSON record per line, shaped
/// `{id, edit: {query, answer}, locality: [{query}], portability: [{query, answer}]}`.
/// Record order follows file order; ids must be unique.
pub fn load_dataset(path: &Path) -> Result<Vec<EvalRecord>, Error> {
    let file = std::fs::File::open(path)?;
    read_dataset(BufReader::new(file))
}

/// Same as [`load_dataset`], from any reader.
pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<EvalRecord>, Error> {
    let mut records = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut position = 0u64;
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = serde_json::from_str(&text)
            .map_err(|e| Error::schema_at(line_no, e.to_string()))?;
        if !seen_ids.insert(parsed.id.clone()) {
            return Err(Error::schema_at(line_no, format!("duplicate record id '{}'", parsed.id)));
        }
        position += 1;
        let record = parsed
            .into_record(position)
            .map_err(|e| Error::schema_at(line_no, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}

#[derive(Deserialize)]
struct RecordLine {
    id: String,
    edit: EditSpec,
    #[serde(default)]
    locality: Vec<LocalitySpec>,
    #[serde(default)]
    portability: Vec<PortabilitySpec>,
}

#[derive(Serialize, Deserialize)]
struct EditSpec {
    query: String,
    answer: String,
}

#[derive(Serialize, Deserialize)]
struct LocalitySpec {
    query: String,
}

#[derive(Serialize, Deserialize)]
struct PortabilitySpec {
    query: String,
    answer: String,
}

impl RecordLine {
    fn into_record(self, position: u64) -> Result<EvalRecord, Error> {
        let edit = Edit::new(&self.id, self.edit.query, self.edit.answer, position)?;
        let mut locality_queries = Vec::with_capacity(self.locality.len());
        for spec in self.locality {
            if spec.query.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "record '{}' has an empty locality query",
                    self.id
                )));
            }
            locality_queries.push(spec.query);
        }
        let mut portability_pairs = Vec::with_capacity(self.portability.len());
        for spec in self.portability {
            if spec.query.trim().is_empty() || spec.answer.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "record '{}' has an incomplete portability pair",
                    self.id
                )));
            }
            portability_pairs.push((spec.query, spec.answer));
        }
        Ok(EvalRecord { edit, locality_queries, portability_pairs })
    }
}

/// Field names used to convert a third-party knowledge-editing export into
/// the canonical format.
///
/// The defaults follow the commonly published export layout (`prompt` /
/// `target_new` at the top level, groups of `{prompt, ground_truth}` pairs
/// under `locality` and `portability`), but release layouts vary; confirm
/// them against your data and override what differs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMap {
    /// Top-level field holding the edit query.
    pub query: String,
    /// Top-level field holding the post-edit target answer.
    pub answer: String,
    /// Optional top-level field holding the record id.
    pub id: Option<String>,
    /// Top-level field grouping locality probes.
    pub locality_group: String,
    /// Top-level field grouping portability probes.
    pub portability_group: String,
    /// Query field inside each probe object.
    pub probe_query: String,
    /// Answer field inside each probe object.
    pub probe_answer: String,
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            query: "prompt".into(),
            answer: "target_new".into(),
            id: None,
            locality_group: "locality".into(),
            portability_group: "portability".into(),
            probe_query: "prompt".into(),
            probe_answer: "ground_truth".into(),
        }
    }
}

impl FieldMap {
    /// Converts one export record. The groups may be arrays of probe
    /// objects or maps from probe-type names to such arrays; both flatten.
    pub fn convert_record(
        &self,
        value: &serde_json::Value,
        fallback_id: &str,
        position: u64,
    ) -> Result<EvalRecord, Error> {
        let object = value
            .as_object()
            .ok_or_else(|| Error::schema("export record is not a JSON object"))?;
        let query = object
            .get(&self.query)
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::schema(format!("export record lacks text field '{}'", self.query)))?;
        let answer = object
            .get(&self.answer)
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::schema(format!("export record lacks text field '{}'", self.answer)))?;
        let id = match &self.id {
            Some(field) => object
                .get(field)
                .map(|v| match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .ok_or_else(|| Error::schema(format!("export record lacks id field '{field}'")))?,
            None => fallback_id.to_string(),
        };

        let mut locality_queries = Vec::new();
        for probe in self.flatten_group(object.get(&self.locality_group))? {
            locality_queries.push(self.probe_text(probe, &self.probe_query)?);
        }
        let mut portability_pairs = Vec::new();
        for probe in self.flatten_group(object.get(&self.portability_group))? {
            portability_pairs.push((
                self.probe_text(probe, &self.probe_query)?,
                self.probe_text(probe, &self.probe_answer)?,
            ));
        }

        let edit = Edit::new(id, query, answer, position)?;
        Ok(EvalRecord { edit, locality_queries, portability_pairs })
    }

    fn flatten_group<'v>(
        &self,
        group: Option<&'v serde_json::Value>,
    ) -> Result<Vec<&'v serde_json::Value>, Error> {
        match group {
            None | Some(serde_json::Value::Null) => Ok(Vec::new()),
            Some(serde_json::Value::Array(items)) => Ok(items.iter().collect()),
            Some(serde_json::Value::Object(by_type)) => {
                let mut probes = Vec::new();
                for nested in by_type.values() {
                    match nested {
                        serde_json::Value::Array(items) => probes.extend(items.iter()),
                        other => probes.push(other),
                    }
                }
                Ok(probes)
            }
            Some(other) => Err(Error::schema(format!(
                "probe group must be an array or object, got {other}"
            ))),
        }
    }

    /// Reads a probe field that is either a string or, as some exports ship
    /// ground truths, a list of acceptable strings (the first is taken).
    fn probe_text(&self, probe: &serde_json::Value, field: &str) -> Result<String, Error> {
        let value = probe
            .get(field)
            .ok_or_else(|| Error::schema(format!("probe object lacks text field '{field}'")))?;
        match value {
            serde_json::Value::String(text) => Ok(text.clone()),
            serde_json::Value::Array(items) => items
                .iter()
                .find_map(|item| item.as_str())
                .map(str::to_string)
                .ok_or_else(|| {
                    Error::schema(format!("probe field '{field}' holds no string entries"))
                }),
            other => Err(Error::schema(format!("probe field '{field}' is not text: {other}"))),
        }
    }
}

/// Derives filter training samples from evaluation records, following the
/// pairing scheme the filter is meant for: the edit's own query and every
/// portability query are relevant to the edit's stored text, locality
/// queries are irrelevant to it, and each general prompt is paired
/// round-robin with a record as an irrelevant sample.
pub fn training_samples_from_records(
    records: &[EvalRecord],
    general_prompts: &[String],
) -> Result<Vec<FilterTrainSample>, Error> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to derive samples from".into()));
    }
    let mut samples = Vec::new();
    for record in records {
        let edit_text = render_qa(&record.edit);
        samples.push(FilterTrainSample::new(&record.edit.query, &edit_text, SampleKind::Edit)?);
        for query in &record.locality_queries {
            samples.push(FilterTrainSample::new(query, &edit_text, SampleKind::Locality)?);
        }
        for (query, _) in &record.portability_pairs {
            samples.push(FilterTrainSample::new(query, &edit_text, SampleKind::Portability)?);
        }
    }
    for (i, prompt) in general_prompts.iter().enumerate() {
        let record = &records[i % records.len()];
        samples.push(FilterTrainSample::new(
            prompt,
            render_qa(&record.edit),
            SampleKind::General,
        )?);
    }
    Ok(samples)
}
