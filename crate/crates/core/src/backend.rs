//! Completion backends: the interface the router dispatches to, plus
//! deterministic in-process implementations for offline runs and tests.

use std::collections::VecDeque;
use std::sync::Mutex;

use crate::embed::fnv1a64;
use crate::error::Error;
use crate::router::{QUERY_MARKER, UPDATED_INFO_MARKER};

/// A text-completion endpoint. The router talks to two of these: a frozen
/// base backend for untouched queries and an aligned backend that consumes
/// the edit-injection prompt.
pub trait CompletionBackend: Send + Sync {
    /// Label for error messages and logs, e.g. "base" or "aligned".
    fn name(&self) -> &str;

    /// Produces a completion for the prompt.
    fn complete(&self, prompt: &str) -> Result<String, Error>;
}

/// Builds the deterministic mock pair used for offline runs.
pub fn mock_backends() -> (MockBaseBackend, MockAlignedBackend) {
    (MockBaseBackend, MockAlignedBackend)
}

/// Stand-in for the frozen base model: answers with a stable token derived
/// from a hash of the prompt, so identical queries always get identical
/// answers and distinct queries almost surely get distinct ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBaseBackend;

impl CompletionBackend for MockBaseBackend {
    fn name(&self) -> &str {
        "base"
    }

    fn complete(&self, prompt: &str) -> Result<String, Error> {
        Ok(format!("base-{:016x}", fnv1a64(prompt.as_bytes())))
    }
}

/// Stand-in for the aligned model: reads the edit statement out of the
/// injection prompt and answers with the part of it the query asks about.
///
/// The statement is compared word-by-word against the query (case- and
/// punctuation-insensitive); the completion is the statement text after the
/// longest shared prefix. When no prefix is shared, or the query covers the
/// whole statement, the statement's trailing clause is returned instead:
/// the text after its last comma, or its last word.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockAlignedBackend;

impl CompletionBackend for MockAlignedBackend {
    fn name(&self) -> &str {
        "aligned"
    }

    fn complete(&self, prompt: &str) -> Result<String, Error> {
        let start = prompt.find(UPDATED_INFO_MARKER).ok_or_else(|| {
            Error::backend(self.name(), format!("prompt lacks the '{}' marker", UPDATED_INFO_MARKER.trim_end()))
        })?;
        let after_info = &prompt[start + UPDATED_INFO_MARKER.len()..];
        let query_at = after_info.find(QUERY_MARKER).ok_or_else(|| {
            Error::backend(self.name(), format!("prompt lacks the '{}' marker", QUERY_MARKER.trim()))
        })?;
        let statement = &after_info[..query_at];
        let query = &after_info[query_at + QUERY_MARKER.len()..];

        let statement_words: Vec<&str> = statement.split_whitespace().collect();
        let query_words: Vec<&str> = query.split_whitespace().collect();
        let mut shared = 0;
        while shared < statement_words.len()
            && shared < query_words.len()
            && word_key(statement_words[shared]) == word_key(query_words[shared])
        {
            shared += 1;
        }
        if shared > 0 && shared < statement_words.len() {
            return Ok(statement_words[shared..].join(" "));
        }
        Ok(trailing_clause(statement))
    }
}

/// Comparison key for one word: surrounding punctuation stripped, lowercased.
fn word_key(word: &str) -> String {
    word.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// The text after the statement's last comma, or its last word.
fn trailing_clause(statement: &str) -> String {
    let trimmed = statement.trim();
    if let Some(pos) = trimmed.rfind(", ") {
        trimmed[pos + 2..].trim().to_string()
    } else {
        trimmed.split_whitespace().last().unwrap_or("").to_string()
    }
}

/// Backend that replays a fixed queue of replies, one per call. Used to
/// drive the LLM augmenter deterministically in tests and dry runs.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    replies: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>, replies: Vec<String>) -> Self {
        ScriptedBackend { name: name.into(), replies: Mutex::new(replies.into()) }
    }

    /// Number of replies not yet consumed.
    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("reply queue poisoned").len()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, _prompt: &str) -> Result<String, Error> {
        self.replies
            .lock()
            .expect("reply queue poisoned")
            .pop_front()
            .ok_or_else(|| Error::backend(&self.name, "scripted reply queue is empty"))
    }
}
