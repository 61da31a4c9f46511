//! Binary relevance filter over (query, stored edit form) pairs.
//!
//! The filter is a logistic regression on pair features built from the two
//! embeddings: `[q; e; |q − e|; q·e]`. It is trained by full-batch gradient
//! descent on the mean cross-entropy, with general-chat samples subsampled
//! at a configurable rate. An external scorer can replace it at runtime via
//! the [`RelevanceFilter`] trait.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{embed_normalized, EmbeddingBackend};
use crate::error::Error;
use crate::memory::{Memory, MemoryEntry};
use crate::retrieval::RetrievalCandidate;

const WEIGHTS_VERSION: u32 = 1;
const PROBABILITY_FLOOR: f64 = 1e-12;

/// Decides whether a retrieved entry is actually about the query.
/// Implemented by [`FilterModel`] and by degenerate gates used in tests and
/// audits; the CLI adds an HTTP-backed scorer.
pub trait RelevanceFilter: Send + Sync {
    /// Probability in (0,1) that the entry is relevant to the query.
    fn relevance(
        &self,
        query_text: &str,
        query_embedding: &[f64],
        entry: &MemoryEntry,
    ) -> Result<f64, Error>;

    /// Candidates scoring at or above this survive filtering.
    fn threshold(&self) -> f64;
}

/// Logistic-regression relevance model: `sigmoid(weights · features + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterModel {
    weights: Vec<f64>,
    bias: f64,
    threshold: f64,
}

impl FilterModel {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    /// A zero-initialized model for the given embedding dimension. It
    /// scores every pair exactly 0.5, so with the default threshold it
    /// passes everything through.
    pub fn zeros(embedding_dimension: usize) -> Result<Self, Error> {
        if embedding_dimension == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        Ok(FilterModel {
            weights: vec![0.0; feature_dimension(embedding_dimension)],
            bias: 0.0,
            threshold: Self::DEFAULT_THRESHOLD,
        })
    }

    /// Rebuilds a model from stored parts, checking the feature-vector
    /// shape `3d + 1` and the threshold range.
    pub fn from_parts(weights: Vec<f64>, bias: f64, threshold: f64) -> Result<Self, Error> {
        if weights.len() < 4 || (weights.len() - 1) % 3 != 0 {
            return Err(Error::InvalidInput(format!(
                "weight vector length {} does not have the 3d+1 shape",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::InvalidInput("model parameters must be finite".into()));
        }
        let mut model = FilterModel { weights, bias, threshold: Self::DEFAULT_THRESHOLD };
        model.set_threshold(threshold)?;
        Ok(model)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn embedding_dimension(&self) -> usize {
        (self.weights.len() - 1) / 3
    }

    pub fn feature_dimension(&self) -> usize {
        self.weights.len()
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), Error> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidInput(format!(
                "threshold {threshold} must lie strictly between 0 and 1"
            )));
        }
        self.threshold = threshold;
        Ok(())
    }

    /// Scores a raw feature vector.
    pub fn score_features(&self, features: &[f64]) -> Result<f64, Error> {
        if features.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: features.len(),
            });
        }
        let z: f64 = self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + self.bias;
        Ok(sigmoid(z))
    }

    /// Scores a pair of unit-norm embeddings.
    pub fn score_pair(&self, query_embedding: &[f64], entry_embedding: &[f64]) -> Result<f64, Error> {
        let features = featurize_pair(query_embedding, entry_embedding)?;
        self.score_features(&features)
    }

    /// Scores a pair of texts by embedding both sides.
    pub fn score_relevance(
        &self,
        query: &str,
        entry_text: &str,
        embedder: &dyn EmbeddingBackend,
    ) -> Result<f64, Error> {
        let query_embedding = embed_normalized(embedder, query)?;
        let entry_embedding = embed_normalized(embedder, entry_text)?;
        self.score_pair(&query_embedding, &entry_embedding)
    }

    /// Writes the model as a single JSON document.
    pub fn save(&self, path: &Path) -> Result<(), Error> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = WeightsFile {
            version: WEIGHTS_VERSION,
            feature_dim: self.weights.len(),
            weights: self.weights.clone(),
            bias: self.bias,
            threshold: self.threshold,
        };
        let mut out = std::fs::File::create(path)?;
        serde_json::to_writer(&mut out, &file).map_err(|e| Error::schema(e.to_string()))?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// Loads a model written by [`FilterModel::save`].
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        let file: WeightsFile =
            serde_json::from_str(&text).map_err(|e| Error::schema(e.to_string()))?;
        if file.version != WEIGHTS_VERSION {
            return Err(Error::schema(format!(
                "unsupported weights version {}, expected {WEIGHTS_VERSION}",
                file.version
            )));
        }
        if file.feature_dim != file.weights.len() {
            return Err(Error::schema(format!(
                "feature_dim {} disagrees with {} stored weights",
                file.feature_dim,
                file.weights.len()
            )));
        }
        FilterModel::from_parts(file.weights, file.bias, file.threshold)
            .map_err(|e| Error::schema(e.to_string()))
    }
}

impl RelevanceFilter for FilterModel {
    fn relevance(
        &self,
        _query_text: &str,
        query_embedding: &[f64],
        entry: &MemoryEntry,
    ) -> Result<f64, Error> {
        self.score_pair(query_embedding, &entry.embedding)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Gate that passes every candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl RelevanceFilter for AcceptAll {
    fn relevance(&self, _q: &str, _e: &[f64], _entry: &MemoryEntry) -> Result<f64, Error> {
        Ok(1.0)
    }

    fn threshold(&self) -> f64 {
        FilterModel::DEFAULT_THRESHOLD
    }
}

/// Gate that rejects every candidate, forcing the base path.
#[derive(Debug, Clone, Copy, Default)]
pub struct RejectAll;

impl RelevanceFilter for RejectAll {
    fn relevance(&self, _q: &str, _e: &[f64], _entry: &MemoryEntry) -> Result<f64, Error> {
        Ok(0.0)
    }

    fn threshold(&self) -> f64 {
        FilterModel::DEFAULT_THRESHOLD
    }
}

/// Pair features for (query, entry): the two embeddings, their elementwise
/// absolute difference, and their dot product; length `3d + 1`.
pub fn featurize_pair(query_embedding: &[f64], entry_embedding: &[f64]) -> Result<Vec<f64>, Error> {
    if query_embedding.len() != entry_embedding.len() {
        return Err(Error::DimensionMismatch {
            expected: query_embedding.len(),
            actual: entry_embedding.len(),
        });
    }
    let d = query_embedding.len();
    let mut features = Vec::with_capacity(feature_dimension(d));
    features.extend_from_slice(query_embedding);
    features.extend_from_slice(entry_embedding);
    features.extend(query_embedding.iter().zip(entry_embedding).map(|(a, b)| (a - b).abs()));
    features.push(query_embedding.iter().zip(entry_embedding).map(|(a, b)| a * b).sum());
    Ok(features)
}

fn feature_dimension(embedding_dimension: usize) -> usize {
    3 * embedding_dimension + 1
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keeps the candidates the filter scores at or above its threshold,
/// preserving their order. A pure subset operation.
pub fn filter_candidates<'a>(
    filter: &dyn RelevanceFilter,
    query_text: &str,
    query_embedding: &[f64],
    candidates: &[RetrievalCandidate<'a>],
) -> Result<Vec<RetrievalCandidate<'a>>, Error> {
    let mut kept = Vec::with_capacity(candidates.len());
    for candidate in candidates {
        let score = filter.relevance(query_text, query_embedding, candidate.entry)?;
        if score >= filter.threshold() {
            kept.push(*candidate);
        }
    }
    Ok(kept)
}

/// Picks the surviving candidate with the highest similarity (ties: lower
/// step, then lower position) and resolves it to its parent edit.
pub fn select_best<'a>(
    filtered: &[RetrievalCandidate<'_>],
    memory: &'a Memory,
) -> Option<(&'a crate::edit::Edit, f64)> {
    let best = filtered.iter().min_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.entry.step.cmp(&b.entry.step))
            .then_with(|| a.position.cmp(&b.position))
    })?;
    let edit = memory
        .edit(&best.entry.edit_id)
        .expect("memory invariant: every entry's edit_id resolves");
    Some((edit, best.similarity))
}

/// What produced a training sample; fixes the sample's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleKind {
    /// The edit's own query against its stored form (relevant).
    Edit,
    /// An unrelated query against a stored form (irrelevant).
    Locality,
    /// A rephrased or derived query for the edit (relevant).
    Portability,
    /// General chat traffic (irrelevant); subsampled during training.
    General,
}

impl SampleKind {
    /// The label this kind must carry: 1 for relevant, 0 for irrelevant.
    pub fn expected_label(&self) -> u8 {
        match self {
            SampleKind::Edit | SampleKind::Portability => 1,
            SampleKind::Locality | SampleKind::General => 0,
        }
    }
}

/// One (query, stored edit text) training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTrainSample {
    pub query: String,
    pub edit_text: String,
    pub label: u8,
    pub kind: SampleKind,
}

impl FilterTrainSample {
    pub fn new(
        query: impl Into<String>,
        edit_text: impl Into<String>,
        kind: SampleKind,
    ) -> Result<Self, Error> {
        let sample = FilterTrainSample {
            query: query.into(),
            edit_text: edit_text.into(),
            label: kind.expected_label(),
            kind,
        };
        sample.validate()?;
        Ok(sample)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.query.trim().is_empty() || self.edit_text.trim().is_empty() {
            return Err(Error::InvalidInput("training sample has empty text".into()));
        }
        if self.label != self.kind.expected_label() {
            return Err(Error::InvalidInput(format!(
                "sample kind {:?} requires label {}, got {}",
                self.kind,
                self.kind.expected_label(),
                self.label
            )));
        }
        Ok(())
    }
}

/// Training hyperparameters. `general_sample_rate` is the probability that
/// each general-kind sample is kept, drawn from the seeded RNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub general_sample_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.1, epochs: 200, seed: 42, general_sample_rate: 0.5 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epoch count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.general_sample_rate) {
            return Err(Error::InvalidInput("general sample rate must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: FilterModel,
    /// Mean cross-entropy after each epoch's update.
    pub epoch_losses: Vec<f64>,
    /// Samples that survived general-kind subsampling.
    pub samples_used: usize,
    pub samples_total: usize,
}

/// Mean cross-entropy of the model on a batch, probabilities clamped away
/// from 0 and 1 so the loss stays finite.
pub fn filter_loss(
    model: &FilterModel,
    batch: &[FilterTrainSample],
    embedder: &dyn EmbeddingBackend,
) -> Result<f64, Error> {
    let features = featurize_batch(batch, embedder)?;
    loss_on_features(model, &features)
}

/// Analytic gradient of [`filter_loss`]: mean of `(p − label) · features`,
/// plus the matching bias term.
pub fn filter_gradient(
    model: &FilterModel,
    batch: &[FilterTrainSample],
    embedder: &dyn EmbeddingBackend,
) -> Result<(Vec<f64>, f64), Error> {
    let features = featurize_batch(batch, embedder)?;
    gradient_on_features(model, &features)
}

/// Trains a fresh model by full-batch gradient descent.
///
/// General-kind samples are kept with probability
/// `config.general_sample_rate`, decided per sample by a ChaCha RNG seeded
/// from `config.seed`, so a fixed seed reproduces the model bit for bit.
/// The surviving samples must contain both labels.
pub fn train_filter(
    samples: &[FilterTrainSample],
    embedder: &dyn EmbeddingBackend,
    config: &TrainConfig,
) -> Result<TrainReport, Error> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::NotTrained("no training samples supplied".into()));
    }
    for sample in samples {
        sample.validate()?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let kept: Vec<FilterTrainSample> = samples
        .iter()
        .filter(|sample| {
            sample.kind != SampleKind::General || rng.gen::<f64>() < config.general_sample_rate
        })
        .cloned()
        .collect();

    let positives = kept.iter().filter(|s| s.label == 1).count();
    let negatives = kept.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::NotTrained(format!(
            "training needs both labels, got {positives} relevant and {negatives} irrelevant \
             samples after subsampling"
        )));
    }

    let features = featurize_batch(&kept, embedder)?;

    let mut model = FilterModel::zeros(embedder.dimension())?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (weight_gradient, bias_gradient) = gradient_on_features(&model, &features)?;
        for (w, g) in model.weights.iter_mut().zip(&weight_gradient) {
            *w -= config.learning_rate * g;
        }
        model.bias -= config.learning_rate * bias_gradient;
        epoch_losses.push(loss_on_features(&model, &features)?);
    }

    Ok(TrainReport { model, epoch_losses, samples_used: kept.len(), samples_total: samples.len() })
}

/// Reads line-delimited training samples, validating each record.
pub fn load_training_samples(path: &Path) -> Result<Vec<FilterTrainSample>, Error> {
    let file = std::fs::File::open(path)?;
    let mut samples = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line_no = index + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let sample: FilterTrainSample = serde_json::from_str(&text)
            .map_err(|e| Error::schema_at(line_no, e.to_string()))?;
        sample.validate().map_err(|e| Error::schema_at(line_no, e.to_string()))?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Embeds a batch once, deduplicating repeated texts.
fn featurize_batch(
    batch: &[FilterTrainSample],
    embedder: &dyn EmbeddingBackend,
) -> Result<Vec<(Vec<f64>, f64)>, Error> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("batch must be non-empty".into()));
    }
    let mut cache: HashMap<&str, Vec<f64>> = HashMap::new();
    for sample in batch {
        for text in [sample.query.as_str(), sample.edit_text.as_str()] {
            if !cache.contains_key(text) {
                cache.insert(text, embed_normalized(embedder, text)?);
            }
        }
    }
    let mut features = Vec::with_capacity(batch.len());
    for sample in batch {
        let query = &cache[sample.query.as_str()];
        let entry = &cache[sample.edit_text.as_str()];
        features.push((featurize_pair(query, entry)?, f64::from(sample.label)));
    }
    Ok(features)
}

fn loss_on_features(model: &FilterModel, features: &[(Vec<f64>, f64)]) -> Result<f64, Error> {
    let mut total = 0.0;
    for (x, label) in features {
        let p = model
            .score_features(x)?
            .clamp(PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR);
        total += if *label == 1.0 { -p.ln() } else { -(1.0 - p).ln() };
    }
    Ok(total / features.len() as f64)
}

fn gradient_on_features(
    model: &FilterModel,
    features: &[(Vec<f64>, f64)],
) -> Result<(Vec<f64>, f64), Error> {
    let mut weight_gradient = vec![0.0; model.weights.len()];
    let mut bias_gradient = 0.0;
    for (x, label) in features {
        let p = model.score_features(x)?;
        let residual = p - label;
        for (g, value) in weight_gradient.iter_mut().zip(x) {
            *g += residual * value;
        }
        bias_gradient += residual;
    }
    let n = features.len() as f64;
    for g in weight_gradient.iter_mut() {
        *g /= n;
    }
    Ok((weight_gradient, bias_gradient / n))
}

#[derive(Serialize, Deserialize)]
struct WeightsFile {
    version: u32,
    feature_dim: usize,
    weights: Vec<f64>,
    bias: f64,
    threshold: f64,
}
