//! Provider-agnostic gateway to text generation, embeddings, and entailment.
//!
//! Backends implement [`Provider`]; the [`Gateway`] layers retries,
//! verbalized-sampling parsing, embedding normalization, and optional
//! prompt/completion audit logging on top. The scripted
//! [`mock::MockProvider`] makes the whole pipeline runnable offline and
//! deterministically.

use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod mock;
#[cfg(feature = "remote")]
pub mod remote;
mod verbalized;

pub use verbalized::{
    draw_without_replacement, find_json_object, parse_sample_array, parse_sample_array_with_key,
    VerbalizedSampleItem, VerbalizedSampleSet,
};

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider unavailable: {0}")]
    Unavailable(String),
    #[error("retries exhausted after {attempts} attempts: {last_error}")]
    RetriesExhausted { attempts: u32, last_error: String },
    #[error("malformed sample set: {0}")]
    MalformedSampleSet(String),
    #[error("malformed ratings: {0}")]
    MalformedRatings(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// One chat-completion request. Temperatures are call-site data, never
/// defaults of the gateway.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub user_messages: Vec<String>,
    pub temperature: f64,
    pub model_tag: String,
    pub max_retries: u32,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, user_message: impl Into<String>) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            user_messages: vec![user_message.into()],
            temperature: 1.0,
            model_tag: "default".to_string(),
            max_retries: 3,
        }
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_model_tag(mut self, tag: impl Into<String>) -> Self {
        self.model_tag = tag.into();
        self
    }

    pub fn with_max_retries(mut self, n: u32) -> Self {
        self.max_retries = n;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.system_prompt.trim().is_empty() && self.user_messages.iter().all(|m| m.trim().is_empty())
        {
            return Err(ProviderError::InvalidRequest("empty prompt".to_string()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        Ok(())
    }

    /// All prompt text of the request, used for hashing and mock dispatch.
    pub fn full_prompt(&self) -> String {
        let mut s = self.system_prompt.clone();
        for m in &self.user_messages {
            s.push('\n');
            s.push_str(m);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntailmentLabel {
    Entailment,
    Neutral,
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentVerdict {
    pub label: EntailmentLabel,
    pub confidence: f64,
}

/// A single backend attempt; retry behavior lives in the [`Gateway`].
pub trait Provider: Send + Sync {
    /// One completion attempt. Transport failures map to `Unavailable`.
    fn complete_raw(&self, req: &ChatRequest) -> Result<String, ProviderError>;

    /// One embedding vector per input text. Need not be unit-norm; the
    /// gateway normalizes.
    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;

    fn entail(&self, premise: &str, hypothesis: &str) -> Result<EntailmentVerdict, ProviderError>;

    /// Identifier stored in records produced through this backend.
    fn tag(&self) -> &str;
}

type AuditSink = Arc<Mutex<Box<dyn Write + Send>>>;

/// Retry-aware front door shared by every agent and metric.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Provider>,
    audit: Option<AuditSink>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Provider>) -> Self {
        Gateway { backend, audit: None }
    }

    /// Returns a gateway that mirrors every prompt and completion to `sink`.
    pub fn with_audit(&self, sink: Box<dyn Write + Send>) -> Self {
        Gateway { backend: Arc::clone(&self.backend), audit: Some(Arc::new(Mutex::new(sink))) }
    }

    pub fn tag(&self) -> &str {
        self.backend.tag()
    }

    fn audit_entry(&self, prompt: &str, outcome: &str) {
        if let Some(sink) = &self.audit {
            if let Ok(mut w) = sink.lock() {
                let _ = writeln!(w, "--- prompt ---\n{prompt}\n--- completion ---\n{outcome}\n");
            }
        }
    }

    /// Completes a request, retrying transport failures and empty outputs up
    /// to `req.max_retries` total attempts.
    pub fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        req.validate()?;
        let attempts = req.max_retries.max(1);
        let mut last_error = String::new();
        for _ in 0..attempts {
            match self.backend.complete_raw(req) {
                Ok(text) if !text.trim().is_empty() => {
                    self.audit_entry(&req.full_prompt(), &text);
                    return Ok(text);
                }
                Ok(_) => last_error = "empty completion".to_string(),
                Err(e) => last_error = e.to_string(),
            }
        }
        self.audit_entry(&req.full_prompt(), &format!("<failed: {last_error}>"));
        Err(ProviderError::RetriesExhausted { attempts, last_error })
    }

    /// Issues a verbalized-sampling request expecting roughly `n` weighted
    /// candidates. Malformed replies are re-asked up to `req.max_retries`
    /// attempts; a wrong candidate count is tolerated and logged, since
    /// callers down-sample anyway.
    pub fn verbalized_sample(
        &self,
        req: &ChatRequest,
        n: usize,
    ) -> Result<VerbalizedSampleSet, ProviderError> {
        self.verbalized_sample_with_key(req, n, "response")
    }

    /// As [`Gateway::verbalized_sample`], with a configurable payload key
    /// (scenario synthesis returns `{scenario, probability}` objects).
    pub fn verbalized_sample_with_key(
        &self,
        req: &ChatRequest,
        n: usize,
        payload_key: &str,
    ) -> Result<VerbalizedSampleSet, ProviderError> {
        req.validate()?;
        let attempts = req.max_retries.max(1);
        let mut last_error = String::new();
        for _ in 0..attempts {
            let text = match self.backend.complete_raw(req) {
                Ok(t) if !t.trim().is_empty() => t,
                Ok(_) => {
                    last_error = "empty completion".to_string();
                    continue;
                }
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            match verbalized::parse_sample_array_with_key(&text, payload_key).and_then(|items| {
                VerbalizedSampleSet::from_items(items, &req.full_prompt())
            }) {
                Ok(set) => {
                    if set.items.len() != n {
                        tracing::warn!(
                            expected = n,
                            got = set.items.len(),
                            "verbalized sample returned a wrong cardinality; accepting"
                        );
                    }
                    self.audit_entry(&req.full_prompt(), &text);
                    return Ok(set);
                }
                Err(e) => last_error = e,
            }
        }
        Err(ProviderError::MalformedSampleSet(format!(
            "{last_error} (after {attempts} attempts)"
        )))
    }

    /// Embeds each text and normalizes every vector to unit length.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::InvalidRequest("no texts to embed".to_string()));
        }
        let raw = self.backend.embed_raw(texts)?;
        if raw.len() != texts.len() {
            return Err(ProviderError::Unavailable(format!(
                "backend returned {} vectors for {} texts",
                raw.len(),
                texts.len()
            )));
        }
        Ok(raw
            .into_iter()
            .map(|v| {
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm == 0.0 {
                    v
                } else {
                    v.into_iter().map(|x| x / norm).collect()
                }
            })
            .collect())
    }

    pub fn entail(
        &self,
        premise: &str,
        hypothesis: &str,
    ) -> Result<EntailmentVerdict, ProviderError> {
        if premise.is_empty() || hypothesis.is_empty() {
            return Err(ProviderError::InvalidRequest(
                "entailment inputs must be non-empty".to_string(),
            ));
        }
        self.backend.entail(premise, hypothesis)
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
