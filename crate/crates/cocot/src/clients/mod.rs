//! Pluggable model and OCR clients: a chat-style HTTP client for real
//! endpoints and deterministic scripted clients replaying fixture files.

mod http;
mod scripted;

pub use http::HttpModelClient;
pub use scripted::{FixtureRule, KeyKind, ScriptedModelClient, ScriptedOcrClient};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::OcrPage;

/// One text generation request. Images ride beside the prompt as refs
/// (paths or URLs, optionally with a crop suffix `#crop=x1,y1,x2,y2`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub prompt: String,
    pub image_refs: Vec<String>,
    pub temperature: f64,
    pub max_output_chars: usize,
}

impl ModelRequest {
    pub fn new(prompt: impl Into<String>) -> Result<ModelRequest> {
        let prompt = prompt.into();
        if prompt.is_empty() {
            return Err(Error::Usage("model request prompt is empty".into()));
        }
        Ok(ModelRequest {
            prompt,
            image_refs: Vec::new(),
            temperature: 0.0,
            max_output_chars: 8192,
        })
    }

    pub fn with_images(mut self, refs: Vec<String>) -> ModelRequest {
        self.image_refs = refs;
        self
    }
}

/// Attach a crop suffix to an image ref so the serving side can slice the
/// region out; the text prompt never embeds coordinates inline.
pub fn crop_ref(image_path: &str, b: &crate::types::BBox) -> String {
    format!("{image_path}#crop={},{},{},{}", b.x1(), b.y1(), b.x2(), b.y2())
}

/// Stable digest of a request's prompt and image refs, used to key exact
/// fixture entries and reported on fixture misses.
pub fn request_digest(prompt: &str, image_refs: &[String]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    for r in image_refs {
        hasher.update([0x1f]);
        hasher.update(r.as_bytes());
    }
    format!("{:x}", hasher.finalize())
}

/// Connection settings for the HTTP model client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub endpoint: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_concurrent: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auth_token: Option<String>,
    /// First retry delay; doubles each attempt.
    pub retry_backoff_ms: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            endpoint: String::new(),
            timeout_ms: 30_000,
            max_retries: 3,
            max_concurrent: 4,
            auth_token: None,
            retry_backoff_ms: 100,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config {
                key: "client.timeout_ms".into(),
                message: "must be > 0".into(),
            });
        }
        if self.max_concurrent == 0 {
            return Err(Error::Config {
                key: "client.max_concurrent".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Contract implemented by every model client. Implementations must be safe
/// for concurrent calls.
pub trait ModelClient: Send + Sync {
    fn complete(&self, req: &ModelRequest) -> Result<String>;
}

/// Contract implemented by every OCR source.
pub trait OcrClient: Send + Sync {
    fn ocr(&self, image_ref: &str) -> Result<OcrPage>;
}
