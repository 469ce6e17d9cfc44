//! Language-model transports: fixture replay, chat-completions over HTTP, and
//! a call counter.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use kgq_core::template::LlmTransport;
use serde_json::json;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the exact prompt text.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Replays `<dir>/<prompt_hash>.txt`.
#[derive(Debug, Clone)]
pub struct MockTransport {
    dir: PathBuf,
}

impl MockTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        MockTransport { dir: dir.into() }
    }

    pub fn fixture_path(&self, prompt: &str) -> PathBuf {
        self.dir.join(format!("{}.txt", prompt_hash(prompt)))
    }

    /// Stores `response` as the fixture for `prompt`.
    pub fn record(dir: &Path, prompt: &str, response: &str) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.txt", prompt_hash(prompt))), response)
    }
}

impl LlmTransport for MockTransport {
    fn send(&self, prompt: &str) -> Result<String, String> {
        let path = self.fixture_path(prompt);
        fs::read_to_string(&path).map_err(|e| format!("no fixture for prompt {} ({}): {e}", prompt_hash(prompt), path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
}

impl HttpConfig {
    /// `KGQ_LLM_ENDPOINT`, `KGQ_LLM_MODEL`, `KGQ_LLM_API_KEY`; explicit values win.
    pub fn from_env(endpoint: Option<String>, model: Option<String>) -> Result<Self, String> {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        let endpoint = endpoint.or_else(|| var("KGQ_LLM_ENDPOINT")).ok_or("no LLM endpoint: set --endpoint or KGQ_LLM_ENDPOINT")?;
        let model = model.or_else(|| var("KGQ_LLM_MODEL")).ok_or("no model name: set --model-name or KGQ_LLM_MODEL")?;
        Ok(HttpConfig { endpoint, model, api_key: var("KGQ_LLM_API_KEY") })
    }
}

/// Chat-completions client, temperature 0, one user message per prompt.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    config: HttpConfig,
}

impl HttpTransport {
    pub fn new(config: HttpConfig) -> Self {
        HttpTransport { config }
    }
}

impl LlmTransport for HttpTransport {
    fn send(&self, prompt: &str) -> Result<String, String> {
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = ureq::post(&self.config.endpoint).header("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| format!("{}: {e}", self.config.endpoint))?;
        let v: serde_json::Value = resp.body_mut().read_json().map_err(|e| format!("bad response body: {e}"))?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| format!("response has no choices[0].message.content: {v}"))
    }
}

/// Counts calls passed through to the inner transport.
#[derive(Debug)]
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: LlmTransport> LlmTransport for CountingTransport<T> {
    fn send(&self, prompt: &str) -> Result<String, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(prompt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_replays_recorded_fixture() {
        let dir = tempfile::tempdir().unwrap();
        MockTransport::record(dir.path(), "hello", "1. A").unwrap();
        let t = CountingTransport::new(MockTransport::new(dir.path()));
        assert_eq!(t.send("hello").unwrap(), "1. A");
        let err = t.send("other").unwrap_err();
        assert!(err.contains(&prompt_hash("other")));
        assert_eq!(t.calls(), 2);
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(prompt_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
