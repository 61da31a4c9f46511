//! HTTP clients for live deployments: completion backends, an embedding
//! service, and a remote relevance scorer. All speak JSON over POST.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use editgate_core::backend::CompletionBackend;
use editgate_core::embed::EmbeddingBackend;
use editgate_core::filter::RelevanceFilter;
use editgate_core::memory::MemoryEntry;
use editgate_core::Error;

use crate::config::EndpointConfig;

/// Which request shape a completion endpoint expects.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStyle {
    /// A chat body with a single user message.
    #[default]
    Chat,
    /// A bare completion body with a `prompt` string.
    Prompt,
}

#[derive(Debug, Deserialize)]
struct CompletionReply {
    text: String,
}

/// A completion endpoint reached over HTTP. The request carries the model
/// (and adapter, if any), the prompt in the configured shape, temperature 0,
/// and a token cap; the reply is `{"text": "..."}`.
pub struct HttpCompletionBackend {
    name: String,
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    adapter: Option<String>,
    style: PromptStyle,
    max_tokens: u32,
    retries: u32,
}

impl HttpCompletionBackend {
    pub fn from_endpoint(role: &str, endpoint: &EndpointConfig) -> Result<Self, Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(endpoint.timeout_secs))
            .build()
            .map_err(|e| Error::backend(role, format!("cannot build HTTP client: {e}")))?;
        Ok(HttpCompletionBackend {
            name: format!("{role}:{}", endpoint.model),
            client,
            url: endpoint.base_url.clone(),
            model: endpoint.model.clone(),
            adapter: endpoint.adapter.clone(),
            style: endpoint.style,
            max_tokens: endpoint.max_tokens,
            retries: endpoint.retries,
        })
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = match self.style {
            PromptStyle::Chat => json!({
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
                "temperature": 0.0,
                "max_tokens": self.max_tokens,
            }),
            PromptStyle::Prompt => json!({
                "model": self.model,
                "prompt": prompt,
                "temperature": 0.0,
                "max_tokens": self.max_tokens,
            }),
        };
        if let Some(adapter) = &self.adapter {
            body["adapter"] = json!(adapter);
        }
        body
    }
}

impl CompletionBackend for HttpCompletionBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str) -> Result<String, Error> {
        let body = self.request_body(prompt);
        post_json_with_retries(&self.client, &self.url, &body, self.retries, &self.name)
            .map(|reply: CompletionReply| reply.text)
    }
}

#[derive(Debug, Deserialize)]
struct EmbeddingReply {
    embedding: Vec<f64>,
}

/// An embedding endpoint reached over HTTP: `{"model"?, "text"}` in,
/// `{"embedding": [..]}` out. The declared dimension is enforced by the
/// callers that normalize.
pub struct HttpEmbedder {
    name: String,
    client: reqwest::blocking::Client,
    url: String,
    model: Option<String>,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(url: String, model: Option<String>, dimension: usize) -> Result<Self, Error> {
        if dimension == 0 {
            return Err(Error::InvalidInput("embedding dimension must be at least 1".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::Embedding(format!("cannot build HTTP client: {e}")))?;
        let name = match &model {
            Some(model) => format!("http:{model}"),
            None => format!("http:{url}"),
        };
        Ok(HttpEmbedder { name, client, url, model, dimension })
    }
}

impl EmbeddingBackend for HttpEmbedder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, Error> {
        let mut body = json!({ "text": text });
        if let Some(model) = &self.model {
            body["model"] = json!(model);
        }
        let reply: EmbeddingReply =
            post_json_with_retries(&self.client, &self.url, &body, 0, &self.name)
                .map_err(|e| Error::Embedding(e.to_string()))?;
        Ok(reply.embedding)
    }
}

#[derive(Debug, Deserialize)]
struct ScoreReply {
    probability: f64,
}

/// A remote relevance scorer: `{"query", "edit_text"}` in,
/// `{"probability": p}` out.
pub struct HttpScorer {
    client: reqwest::blocking::Client,
    url: String,
    threshold: f64,
}

impl HttpScorer {
    pub fn new(url: String, threshold: f64) -> Result<Self, Error> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidInput(
                "scorer threshold must lie strictly in (0, 1)".into(),
            ));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| Error::backend("scorer", format!("cannot build HTTP client: {e}")))?;
        Ok(HttpScorer { client, url, threshold })
    }
}

impl RelevanceFilter for HttpScorer {
    fn relevance(
        &self,
        query_text: &str,
        _query_embedding: &[f64],
        entry: &MemoryEntry,
    ) -> Result<f64, Error> {
        let body = json!({ "query": query_text, "edit_text": entry.text });
        let reply: ScoreReply =
            post_json_with_retries(&self.client, &self.url, &body, 0, "scorer")?;
        if !reply.probability.is_finite() || !(0.0..=1.0).contains(&reply.probability) {
            return Err(Error::backend(
                "scorer",
                format!("probability {} outside [0, 1]", reply.probability),
            ));
        }
        Ok(reply.probability)
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }
}

fn post_json_with_retries<T: serde::de::DeserializeOwned>(
    client: &reqwest::blocking::Client,
    url: &str,
    body: &serde_json::Value,
    retries: u32,
    backend_name: &str,
) -> Result<T, Error> {
    let mut last_error = String::new();
    for _attempt in 0..=retries {
        match client.post(url).json(body).send() {
            Ok(response) => {
                let status = response.status();
                if status.is_success() {
                    return response.json::<T>().map_err(|e| {
                        Error::backend(backend_name, format!("malformed reply from {url}: {e}"))
                    });
                }
                last_error = format!("{url} replied {status}");
                if !status.is_server_error() {
                    break;
                }
            }
            Err(e) => last_error = format!("request to {url} failed: {e}"),
        }
    }
    Err(Error::backend(backend_name, last_error))
}
