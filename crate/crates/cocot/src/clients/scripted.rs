//! Deterministic stand-ins for the model and OCR services, replaying
//! fixture files so the whole pipeline runs offline and byte-stably.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::read_jsonl;
use crate::types::OcrPage;

use super::{request_digest, ModelClient, ModelRequest, OcrClient};

/// How a fixture entry is matched against a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyKind {
    /// Exact match on [`request_digest`].
    Digest,
    /// `key` appears verbatim anywhere in the prompt.
    Substring,
}

/// One scripted response: `{key_kind, key, response}` per fixture line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRule {
    pub key_kind: KeyKind,
    pub key: String,
    pub response: String,
}

impl FixtureRule {
    pub fn substring(key: impl Into<String>, response: impl Into<String>) -> FixtureRule {
        FixtureRule {
            key_kind: KeyKind::Substring,
            key: key.into(),
            response: response.into(),
        }
    }

    pub fn digest(key: impl Into<String>, response: impl Into<String>) -> FixtureRule {
        FixtureRule {
            key_kind: KeyKind::Digest,
            key: key.into(),
            response: response.into(),
        }
    }
}

/// Replays fixture responses. Digest entries take precedence; substring
/// rules are tried in file order. Referentially transparent: identical
/// requests yield identical responses across runs.
pub struct ScriptedModelClient {
    by_digest: HashMap<String, String>,
    substrings: Vec<(String, String)>,
}

impl ScriptedModelClient {
    pub fn new(rules: Vec<FixtureRule>) -> ScriptedModelClient {
        let mut by_digest = HashMap::new();
        let mut substrings = Vec::new();
        for r in rules {
            match r.key_kind {
                KeyKind::Digest => {
                    by_digest.insert(r.key, r.response);
                }
                KeyKind::Substring => substrings.push((r.key, r.response)),
            }
        }
        ScriptedModelClient { by_digest, substrings }
    }

    pub fn from_path(path: &Path) -> Result<ScriptedModelClient> {
        Ok(ScriptedModelClient::new(read_jsonl(path)?))
    }
}

impl ModelClient for ScriptedModelClient {
    fn complete(&self, req: &ModelRequest) -> Result<String> {
        let digest = request_digest(&req.prompt, &req.image_refs);
        if let Some(resp) = self.by_digest.get(&digest) {
            return Ok(resp.clone());
        }
        for (key, resp) in &self.substrings {
            if req.prompt.contains(key.as_str()) {
                return Ok(resp.clone());
            }
        }
        Err(Error::FixtureMiss { digest })
    }
}

/// Serves pre-computed OCR pages keyed by image ref.
pub struct ScriptedOcrClient {
    pages: HashMap<String, OcrPage>,
}

impl ScriptedOcrClient {
    pub fn new(pages: Vec<OcrPage>) -> ScriptedOcrClient {
        ScriptedOcrClient {
            pages: pages.into_iter().map(|p| (p.image_path.clone(), p)).collect(),
        }
    }

    pub fn from_path(path: &Path) -> Result<ScriptedOcrClient> {
        Ok(ScriptedOcrClient::new(read_jsonl(path)?))
    }
}

impl OcrClient for ScriptedOcrClient {
    fn ocr(&self, image_ref: &str) -> Result<OcrPage> {
        self.pages
            .get(image_ref)
            .cloned()
            .ok_or_else(|| Error::Client(format!("no OCR fixture for image `{image_ref}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BBox, OcrWord};

    #[test]
    fn substring_rule_matches() {
        let client = ScriptedModelClient::new(vec![FixtureRule::substring(
            "Used 1/3",
            "SELECTED_REGION: Region 1, ROLE: evidence, REASONING: x, RELATIONSHIP: sequential",
        )]);
        let req = ModelRequest::new("Progress: Used 1/3 regions.").unwrap();
        assert!(client.complete(&req).unwrap().starts_with("SELECTED_REGION"));
    }

    #[test]
    fn miss_reports_digest() {
        let client = ScriptedModelClient::new(vec![]);
        let req = ModelRequest::new("nothing matches this").unwrap();
        match client.complete(&req) {
            Err(Error::FixtureMiss { digest }) => {
                assert_eq!(digest, request_digest("nothing matches this", &[]));
            }
            other => panic!("expected FixtureMiss, got {other:?}"),
        }
    }

    #[test]
    fn digest_rule_beats_substring() {
        let req = ModelRequest::new("hello world").unwrap();
        let digest = request_digest(&req.prompt, &req.image_refs);
        let client = ScriptedModelClient::new(vec![
            FixtureRule::substring("hello", "sub"),
            FixtureRule::digest(digest, "exact"),
        ]);
        assert_eq!(client.complete(&req).unwrap(), "exact");
    }

    #[test]
    fn scripted_client_is_deterministic() {
        let client = ScriptedModelClient::new(vec![FixtureRule::substring("q", "r")]);
        let req = ModelRequest::new("a q here").unwrap();
        assert_eq!(client.complete(&req).unwrap(), client.complete(&req).unwrap());
    }

    #[test]
    fn ocr_fixture_lookup() {
        let word = OcrWord::new("GDP", BBox::from_pixels(10, 10, 40, 20).unwrap(), 0.99).unwrap();
        let client = ScriptedOcrClient::new(vec![OcrPage::new("img.png", vec![word])]);
        assert_eq!(client.ocr("img.png").unwrap().words.len(), 1);
        assert!(matches!(client.ocr("missing.png"), Err(Error::Client(_))));
    }
}
