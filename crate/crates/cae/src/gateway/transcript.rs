use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use cae_core::model::{canonical_json, sha256_hex};
use serde::{Deserialize, Serialize};

use super::{CompletionParams, GatewayError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_digest: String,
    pub prompt_text: String,
    pub response_text: String,
    pub provider_id: String,
    pub latency: f64,
    /// Set when the provider failed; replay reproduces the failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Digest of the prompt together with the provider parameters.
pub fn request_digest(prompt: &str, params: &CompletionParams) -> String {
    #[derive(Serialize)]
    struct Request<'a> {
        prompt: &'a str,
        params: &'a CompletionParams,
    }
    sha256_hex(canonical_json(&Request { prompt, params }).as_bytes())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let file = File::open(path).map_err(|e| GatewayError::Transcript(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Transcript(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| GatewayError::Transcript(format!("{}:{}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(Transcript { entries })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut out = File::create(path)?;
        for entry in &self.entries {
            writeln!(out, "{}", serde_json::to_string(entry)?)?;
        }
        Ok(())
    }

    pub fn replayer(&self) -> Replayer {
        let mut queues: BTreeMap<String, VecDeque<TranscriptEntry>> = BTreeMap::new();
        for entry in &self.entries {
            queues.entry(entry.request_digest.clone()).or_default().push_back(entry.clone());
        }
        Replayer { queues }
    }
}

/// Serves recorded responses by request digest, consuming repeated digests
/// in recording order.
#[derive(Debug, Clone)]
pub struct Replayer {
    queues: BTreeMap<String, VecDeque<TranscriptEntry>>,
}

impl Replayer {
    pub fn next(&mut self, digest: &str) -> Result<TranscriptEntry, GatewayError> {
        self.queues
            .get_mut(digest)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| GatewayError::ReplayMiss(digest.to_string()))
    }

    pub fn replay(&mut self, prompt: &str, params: &CompletionParams) -> Result<String, GatewayError> {
        let entry = self.next(&request_digest(prompt, params))?;
        match entry.error {
            Some(message) => Err(GatewayError::Recorded(message)),
            None => Ok(entry.response_text),
        }
    }

    pub fn remaining(&self) -> usize {
        self.queues.values().map(VecDeque::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(prompt: &str, response: &str, params: &CompletionParams) -> TranscriptEntry {
        TranscriptEntry {
            request_digest: request_digest(prompt, params),
            prompt_text: prompt.into(),
            response_text: response.into(),
            provider_id: "mock".into(),
            latency: 0.0,
            error: None,
        }
    }

    #[test]
    fn ordered_consumption_and_miss() {
        let params = CompletionParams::new("mock", 0);
        let mut t = Transcript::default();
        t.push(entry("p1", "r1", &params));
        t.push(entry("p1", "r2", &params));
        let mut r = t.replayer();
        assert_eq!(r.replay("p1", &params).unwrap(), "r1");
        assert_eq!(r.replay("p1", &params).unwrap(), "r2");
        assert!(matches!(r.replay("p1", &params), Err(GatewayError::ReplayMiss(_))));
        assert!(matches!(r.replay("p2", &params), Err(GatewayError::ReplayMiss(_))));
    }

    #[test]
    fn digest_depends_on_params() {
        let a = CompletionParams::new("mock", 0);
        let b = CompletionParams::new("mock", 1);
        assert_ne!(request_digest("p", &a), request_digest("p", &b));
        assert_eq!(request_digest("p", &a), request_digest("p", &a.clone()));
    }

    #[test]
    fn jsonl_round_trip() {
        let params = CompletionParams::new("mock", 3);
        let mut t = Transcript::default();
        t.push(entry("line one\nline two", "```\ncode\n```", &params));
        let mut failed = entry("p", "", &params);
        failed.error = Some("provider down".into());
        t.push(failed);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        t.save(&path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
        assert_eq!(Transcript::load(&path).unwrap(), t);
    }
}
