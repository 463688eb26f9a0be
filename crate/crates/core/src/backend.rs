//! The text-completion port shared by the extractor, reasoner and explainer.

use std::time::Duration;

use reqwest::blocking::Client;
use serde_json::{json, Value};
use thiserror::Error;

use crate::chain_data::RetryPolicy;

pub const LLM_ENDPOINT_ENV: &str = "RISKTAGGER_LLM_ENDPOINT";
pub const LLM_KEY_ENV: &str = "RISKTAGGER_LLM_KEY";
pub const LLM_MODEL_ENV: &str = "RISKTAGGER_LLM_MODEL";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend not configured: {0}")]
    NotConfigured(String),
    #[error("backend failed after {attempts} attempt(s): {reason}")]
    Failure { attempts: u32, reason: String },
    #[error("backend `{backend}` does not handle this prompt")]
    Unsupported { backend: String },
}

pub trait BackendPort: Send + Sync {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError>;

    /// Short name recorded next to every verdict this backend produced.
    fn tag(&self) -> &str;
}

impl<T: BackendPort + ?Sized> BackendPort for &T {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError> {
        (**self).complete(prompt, temperature, max_tokens)
    }

    fn tag(&self) -> &str {
        (**self).tag()
    }
}

impl<T: BackendPort + ?Sized> BackendPort for std::sync::Arc<T> {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError> {
        (**self).complete(prompt, temperature, max_tokens)
    }

    fn tag(&self) -> &str {
        (**self).tag()
    }
}

/// Chat-completions HTTP adapter (`POST {base}/chat/completions`).
pub struct ChatCompletionsBackend {
    http: Client,
    base_url: String,
    api_key: Option<String>,
    model: String,
    retry: RetryPolicy,
    tag: String,
}

impl ChatCompletionsBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, model: impl Into<String>) -> Self {
        let model = model.into();
        Self {
            http: Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("http client"),
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            api_key,
            tag: format!("llm:{model}"),
            model,
            retry: RetryPolicy::default(),
        }
    }

    /// Reads endpoint, key and model from the environment.
    pub fn from_env() -> Result<Self, BackendError> {
        let base = std::env::var(LLM_ENDPOINT_ENV)
            .map_err(|_| BackendError::NotConfigured(format!("{LLM_ENDPOINT_ENV} is not set")))?;
        let key = std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty());
        let model = std::env::var(LLM_MODEL_ENV).unwrap_or_else(|_| "default".into());
        Ok(Self::new(base, key, model))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn attempt(&self, body: &Value) -> Result<String, String> {
        let mut req = self.http.post(format!("{}/chat/completions", self.base_url)).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| format!("invalid JSON: {e}"))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| "response has no choices[0].message.content".into())
    }
}

impl BackendPort for ChatCompletionsBackend {
    fn complete(&self, prompt: &str, temperature: f64, max_tokens: u32) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        });
        let attempts = self.retry.attempts.max(1);
        let mut reason = String::new();
        for n in 0..attempts {
            if n > 0 {
                std::thread::sleep(self.retry.base_delay * 2u32.pow(n - 1));
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) => {
                    tracing::warn!(attempt = n + 1, error = %e, "completion request failed");
                    reason = e;
                }
            }
        }
        Err(BackendError::Failure { attempts, reason })
    }

    fn tag(&self) -> &str {
        &self.tag
    }
}
