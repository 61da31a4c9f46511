//! TOML configuration and the engine assembly it describes.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use editgate_core::augment::PromptTemplates;
use editgate_core::backend::{mock_backends, CompletionBackend};
use editgate_core::embed::{EmbeddingBackend, NgramEmbedder};
use editgate_core::engine::{Augmenter, EditEngine};
use editgate_core::filter::{FilterModel, RelevanceFilter};
use editgate_core::memory::Memory;
use editgate_core::Error;

use crate::remote::{HttpCompletionBackend, HttpEmbedder, HttpScorer, PromptStyle};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub augmenter: AugmenterConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub persistence: PersistenceConfig,
    #[serde(default)]
    pub server: ServerConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    #[serde(default)]
    pub kind: EmbedderKind,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    #[default]
    TestNgram,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    #[serde(default = "default_true")]
    pub mock: bool,
    pub base: Option<EndpointConfig>,
    pub aligned: Option<EndpointConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    pub adapter: Option<String>,
    #[serde(default)]
    pub style: PromptStyle,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retries: u32,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmenterConfig {
    #[serde(default)]
    pub kind: AugmenterKind,
    pub endpoint: Option<EndpointConfig>,
    pub templates_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugmenterKind {
    #[default]
    Rule,
    Llm,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    pub filter_weights_path: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub scorer_url: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersistenceConfig {
    #[serde(default = "default_snapshot_path")]
    pub memory_snapshot_path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen_address: String,
}

fn default_dimension() -> usize {
    NgramEmbedder::DEFAULT_DIMENSION
}

fn default_true() -> bool {
    true
}

fn default_timeout() -> u64 {
    30
}

fn default_max_tokens() -> u32 {
    256
}

fn default_k() -> usize {
    4
}

fn default_snapshot_path() -> PathBuf {
    PathBuf::from("memory.snapshot")
}

fn default_listen() -> String {
    "127.0.0.1:8787".to_string()
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::TestNgram,
            dimension: default_dimension(),
            endpoint: None,
            model: None,
        }
    }
}

impl Default for BackendsConfig {
    fn default() -> Self {
        BackendsConfig { mock: true, base: None, aligned: None }
    }
}

impl Default for AugmenterConfig {
    fn default() -> Self {
        AugmenterConfig { kind: AugmenterKind::Rule, endpoint: None, templates_dir: None }
    }
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            k: default_k(),
            filter_weights_path: None,
            threshold: None,
            scorer_url: None,
        }
    }
}

impl Default for PersistenceConfig {
    fn default() -> Self {
        PersistenceConfig { memory_snapshot_path: default_snapshot_path() }
    }
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { listen_address: default_listen() }
    }
}

impl Config {
    /// Reads and validates a config file. A missing or unreadable file is an
    /// invalid-input error; malformed contents are schema errors.
    pub fn load(path: &Path) -> Result<Config, Error> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let config: Config = toml::from_str(&raw)
            .map_err(|e| Error::schema(format!("config file {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.embedder.dimension == 0 {
            return Err(Error::schema("embedder.dimension must be at least 1"));
        }
        if self.embedder.kind == EmbedderKind::Http && self.embedder.endpoint.is_none() {
            return Err(Error::schema("embedder.kind = \"http\" requires embedder.endpoint"));
        }
        if self.backends.mock {
            if self.backends.base.is_some() || self.backends.aligned.is_some() {
                return Err(Error::schema(
                    "backends.mock = true forbids configuring base/aligned endpoints",
                ));
            }
        } else if self.backends.base.is_none() || self.backends.aligned.is_none() {
            return Err(Error::schema(
                "backends.mock = false requires both backends.base and backends.aligned",
            ));
        }
        if self.augmenter.kind == AugmenterKind::Llm && self.augmenter.endpoint.is_none() {
            return Err(Error::schema("augmenter.kind = \"llm\" requires augmenter.endpoint"));
        }
        if self.retrieval.k == 0 {
            return Err(Error::schema("retrieval.k must be at least 1"));
        }
        if let Some(threshold) = self.retrieval.threshold {
            if !(threshold > 0.0 && threshold < 1.0) {
                return Err(Error::schema("retrieval.threshold must lie strictly in (0, 1)"));
            }
        }
        Ok(())
    }

    pub fn build_embedder(&self) -> Result<Box<dyn EmbeddingBackend>, Error> {
        match self.embedder.kind {
            EmbedderKind::TestNgram => {
                Ok(Box::new(NgramEmbedder::new(self.embedder.dimension)?))
            }
            EmbedderKind::Http => {
                let endpoint = self.embedder.endpoint.clone().ok_or_else(|| {
                    Error::schema("embedder.kind = \"http\" requires embedder.endpoint")
                })?;
                Ok(Box::new(HttpEmbedder::new(
                    endpoint,
                    self.embedder.model.clone(),
                    self.embedder.dimension,
                )?))
            }
        }
    }

    pub fn build_filter(&self) -> Result<Box<dyn RelevanceFilter>, Error> {
        if let Some(url) = &self.retrieval.scorer_url {
            let threshold = self.retrieval.threshold.unwrap_or(FilterModel::DEFAULT_THRESHOLD);
            return Ok(Box::new(HttpScorer::new(url.clone(), threshold)?));
        }
        let mut model = match &self.retrieval.filter_weights_path {
            Some(path) => FilterModel::load(path)?,
            None => FilterModel::zeros(self.embedder.dimension)?,
        };
        if let Some(threshold) = self.retrieval.threshold {
            model.set_threshold(threshold)?;
        }
        Ok(Box::new(model))
    }

    pub fn build_backends(
        &self,
    ) -> Result<(Box<dyn CompletionBackend>, Box<dyn CompletionBackend>), Error> {
        if self.backends.mock {
            let (base, aligned) = mock_backends();
            return Ok((Box::new(base), Box::new(aligned)));
        }
        let base = self.backends.base.as_ref().expect("validated");
        let aligned = self.backends.aligned.as_ref().expect("validated");
        Ok((
            Box::new(HttpCompletionBackend::from_endpoint("base", base)?),
            Box::new(HttpCompletionBackend::from_endpoint("aligned", aligned)?),
        ))
    }

    pub fn build_augmenter(&self) -> Result<Augmenter, Error> {
        match self.augmenter.kind {
            AugmenterKind::Rule => Ok(Augmenter::RuleBased),
            AugmenterKind::Llm => {
                let endpoint = self.augmenter.endpoint.as_ref().ok_or_else(|| {
                    Error::schema("augmenter.kind = \"llm\" requires augmenter.endpoint")
                })?;
                let client = HttpCompletionBackend::from_endpoint("augmenter", endpoint)?;
                let templates = match &self.augmenter.templates_dir {
                    Some(dir) => PromptTemplates::load_dir(dir)?,
                    None => PromptTemplates::default(),
                };
                Ok(Augmenter::Llm { client: Box::new(client), templates })
            }
        }
    }

    /// Assembles an engine. With `load_snapshot` the configured snapshot file
    /// is loaded when present; otherwise the memory starts empty.
    pub fn build_engine(&self, load_snapshot: bool) -> Result<EditEngine, Error> {
        let embedder = self.build_embedder()?;
        let filter = self.build_filter()?;
        let augmenter = self.build_augmenter()?;
        let (base, aligned) = self.build_backends()?;
        let snapshot_path = &self.persistence.memory_snapshot_path;
        let memory = if load_snapshot && snapshot_path.exists() {
            Memory::load(snapshot_path, embedder.as_ref())?
        } else {
            Memory::new(embedder.as_ref())
        };
        EditEngine::with_memory(
            embedder,
            filter,
            augmenter,
            base,
            aligned,
            self.retrieval.k,
            memory,
        )
    }
}
