//! Pluggable completion/embedding provider over HTTP.
//!
//! One interface (`complete(prompt, params) -> text`) with a configurable
//! base URL and model, so any completions- or chat-style backend works. The
//! credential comes from the `DIVREF_API_KEY` environment variable.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde_json::{json, Value};

use super::{postprocess_response, GenerationParams};
use crate::{Error, Result};

pub trait CompletionProvider: Send + Sync {
    /// One completion request; retries live in `complete_with_retry`.
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
    fn embedding_model_id(&self) -> &str;
}

/// Provider settings, read from a plain-text `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_id: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_concurrency: usize,
    pub embedding_model: String,
    /// `completions` or `chat`.
    pub api_style: String,
    pub initial_backoff_ms: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model_id: "gpt-3.5-turbo-instruct".to_string(),
            temperature: 1.0,
            top_p: 0.9,
            max_concurrency: 4,
            embedding_model: "text-embedding-ada-002".to_string(),
            api_style: "completions".to_string(),
            initial_backoff_ms: 250,
        }
    }
}

impl ProviderConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_key_values(&content)
    }

    pub fn from_key_values(content: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (idx, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("provider config line {}: expected key=value", idx + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut config = ProviderConfig::default();
        for (key, value) in map {
            match key.as_str() {
                "base_url" => config.base_url = value,
                "model_id" => config.model_id = value,
                "temperature" => {
                    config.temperature = value
                        .parse()
                        .map_err(|_| Error::config(format!("bad temperature '{value}'")))?;
                }
                "top_p" => {
                    config.top_p = value
                        .parse()
                        .map_err(|_| Error::config(format!("bad top_p '{value}'")))?;
                }
                "max_concurrency" => {
                    config.max_concurrency = value
                        .parse()
                        .map_err(|_| Error::config(format!("bad max_concurrency '{value}'")))?;
                }
                "embedding_model" => config.embedding_model = value,
                "api_style" => {
                    if value != "completions" && value != "chat" {
                        return Err(Error::config(format!(
                            "api_style must be 'completions' or 'chat', got '{value}'"
                        )));
                    }
                    config.api_style = value;
                }
                "initial_backoff_ms" => {
                    config.initial_backoff_ms = value
                        .parse()
                        .map_err(|_| Error::config(format!("bad initial_backoff_ms '{value}'")))?;
                }
                other => {
                    return Err(Error::config(format!(
                        "unknown provider config key '{other}'"
                    )));
                }
            }
        }
        Ok(config)
    }

    pub fn generation_params(&self) -> GenerationParams {
        GenerationParams {
            temperature: self.temperature,
            top_p: self.top_p,
            model_id: self.model_id.clone(),
            ..GenerationParams::default()
        }
    }
}

/// HTTP-backed provider for completions and embeddings.
pub struct HttpProvider {
    config: ProviderConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::provider(format!("failed to build http client: {e}")))?;
        Ok(HttpProvider {
            config,
            api_key: std::env::var("DIVREF_API_KEY").ok(),
            client,
        })
    }

    fn post(&self, endpoint: &str, body: Value) -> Result<Value> {
        let url = format!("{}/{endpoint}", self.config.base_url.trim_end_matches('/'));
        let mut request = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| Error::provider(format!("request to {url} failed: {e}")))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Error::provider(format!("reading response from {url} failed: {e}")))?;
        if !status.is_success() {
            let snippet: String = text.chars().take(300).collect();
            return Err(Error::provider(format!("{url} returned {status}: {snippet}")));
        }
        serde_json::from_str(&text)
            .map_err(|e| Error::provider(format!("{url} returned invalid json: {e}")))
    }
}

impl CompletionProvider for HttpProvider {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String> {
        let (endpoint, body, extract): (&str, Value, fn(&Value) -> Option<&str>) =
            if self.config.api_style == "chat" {
                (
                    "chat/completions",
                    json!({
                        "model": params.model_id,
                        "messages": [{"role": "user", "content": prompt}],
                        "temperature": params.temperature,
                        "top_p": params.top_p,
                    }),
                    |v| v["choices"][0]["message"]["content"].as_str(),
                )
            } else {
                (
                    "completions",
                    json!({
                        "model": params.model_id,
                        "prompt": prompt,
                        "temperature": params.temperature,
                        "top_p": params.top_p,
                        "max_tokens": 512,
                    }),
                    |v| v["choices"][0]["text"].as_str(),
                )
            };
        let value = self.post(endpoint, body)?;
        extract(&value)
            .map(str::to_string)
            .ok_or_else(|| Error::provider("response carries no completion text".to_string()))
    }
}

impl EmbeddingProvider for HttpProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let value = self.post(
            "embeddings",
            json!({"model": self.config.embedding_model, "input": texts}),
        )?;
        let data = value["data"]
            .as_array()
            .ok_or_else(|| Error::provider("embedding response carries no data".to_string()))?;
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let vector = item["embedding"]
                .as_array()
                .ok_or_else(|| Error::provider("embedding entry is not an array".to_string()))?
                .iter()
                .map(|x| x.as_f64().unwrap_or(f64::NAN))
                .collect();
            out.push(vector);
        }
        if out.len() != texts.len() {
            return Err(Error::provider(format!(
                "asked for {} embeddings, got {}",
                texts.len(),
                out.len()
            )));
        }
        Ok(out)
    }

    fn embedding_model_id(&self) -> &str {
        &self.config.embedding_model
    }
}

const INITIAL_BACKOFF_MS: u64 = 250;

/// Completion with exponential backoff. Empty generations (after trimming
/// and unquoting) are dropped and retried.
pub fn complete_with_retry(
    provider: &dyn CompletionProvider,
    prompt: &str,
    params: &GenerationParams,
) -> Result<String> {
    let mut last_error: Option<Error> = None;
    for attempt in 0..params.max_attempts {
        if attempt > 0 {
            std::thread::sleep(Duration::from_millis(
                INITIAL_BACKOFF_MS.saturating_mul(1 << (attempt - 1).min(6)),
            ));
        }
        match provider.complete(prompt, params) {
            Ok(raw) => {
                let text = postprocess_response(&raw);
                if !text.is_empty() {
                    return Ok(text);
                }
                last_error = Some(Error::provider("provider returned an empty generation"));
            }
            Err(e) => last_error = Some(e),
        }
    }
    Err(last_error.unwrap_or_else(|| Error::provider("no attempts were made")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct FlakyProvider {
        calls: AtomicUsize,
        fail_first: usize,
    }

    impl CompletionProvider for FlakyProvider {
        fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<String> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(Error::provider("boom"))
            } else {
                Ok(format!("\"echo: {prompt}\""))
            }
        }
    }

    #[test]
    fn config_parses_key_values() {
        let config = ProviderConfig::from_key_values(
            "# comment\nbase_url = http://localhost:9/v1\nmodel_id=m\ntemperature=0.5\nmax_concurrency=2\n",
        )
        .unwrap();
        assert_eq!(config.base_url, "http://localhost:9/v1");
        assert_eq!(config.model_id, "m");
        assert_eq!(config.temperature, 0.5);
        assert_eq!(config.max_concurrency, 2);
        assert_eq!(config.top_p, 0.9);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(ProviderConfig::from_key_values("bogus=1\n").is_err());
    }

    #[test]
    fn retry_succeeds_after_transient_failures() {
        let provider = FlakyProvider {
            calls: AtomicUsize::new(0),
            fail_first: 2,
        };
        let params = GenerationParams {
            max_attempts: 3,
            ..GenerationParams::default()
        };
        let out = complete_with_retry(&provider, "hi", &params).unwrap();
        assert_eq!(out, "echo: hi");
        assert_eq!(provider.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn retry_gives_up_after_max_attempts() {
        let provider = FlakyProvider {
            calls: AtomicUsize::new(0),
            fail_first: 10,
        };
        let params = GenerationParams {
            max_attempts: 2,
            ..GenerationParams::default()
        };
        assert!(complete_with_retry(&provider, "hi", &params).is_err());
        assert_eq!(provider.calls.load(Ordering::SeqCst), 2);
    }
}
