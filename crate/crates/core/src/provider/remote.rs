//! Remote backend speaking the common chat-completion HTTP contract.
//!
//! Configured by base URL, the name of the environment variable holding the
//! credential, and a model tag. Entailment has no remote implementation here;
//! it is served by the mock (or any future NLI-capable backend).

use serde::Deserialize;
use serde_json::json;

use super::{ChatRequest, EntailmentVerdict, Provider, ProviderError};

pub struct RemoteProvider {
    base_url: String,
    api_key: Option<String>,
    embedding_model: String,
    tag: String,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    /// `api_key_env` names the environment variable holding the credential;
    /// the credential itself is never stored in config files or manifests.
    pub fn new(
        base_url: impl Into<String>,
        api_key_env: &str,
        embedding_model: impl Into<String>,
        tag: impl Into<String>,
    ) -> Result<Self, ProviderError> {
        let api_key = std::env::var(api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(RemoteProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            embedding_model: embedding_model.into(),
            tag: tag.into(),
            client,
        })
    }

    fn post(&self, path: &str, body: serde_json::Value) -> Result<serde_json::Value, ProviderError> {
        let mut req = self.client.post(format!("{}{path}", self.base_url)).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ProviderError::Unavailable(format!("HTTP {}", resp.status())));
        }
        resp.json().map_err(|e| ProviderError::Unavailable(e.to_string()))
    }
}

impl Provider for RemoteProvider {
    fn complete_raw(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        #[derive(Deserialize)]
        struct Choice {
            message: Message,
        }
        #[derive(Deserialize)]
        struct Message {
            content: String,
        }
        #[derive(Deserialize)]
        struct Completion {
            choices: Vec<Choice>,
        }

        let mut messages = vec![json!({"role": "system", "content": req.system_prompt})];
        for m in &req.user_messages {
            messages.push(json!({"role": "user", "content": m}));
        }
        let body = json!({
            "model": req.model_tag,
            "messages": messages,
            "temperature": req.temperature,
        });
        let value = self.post("/chat/completions", body)?;
        let completion: Completion = serde_json::from_value(value)
            .map_err(|e| ProviderError::Unavailable(format!("unexpected response shape: {e}")))?;
        completion
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Unavailable("no choices in response".to_string()))
    }

    fn embed_raw(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        #[derive(Deserialize)]
        struct Embedding {
            embedding: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct Embeddings {
            data: Vec<Embedding>,
        }

        let body = json!({"model": self.embedding_model, "input": texts});
        let value = self.post("/embeddings", body)?;
        let parsed: Embeddings = serde_json::from_value(value)
            .map_err(|e| ProviderError::Unavailable(format!("unexpected response shape: {e}")))?;
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }

    fn entail(&self, _premise: &str, _hypothesis: &str) -> Result<EntailmentVerdict, ProviderError> {
        Err(ProviderError::Unavailable(
            "no remote entailment backend is configured; use the mock or an NLI-capable provider"
                .to_string(),
        ))
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}
