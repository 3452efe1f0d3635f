use cae_core::model::sha256_hex;
use serde::{Deserialize, Serialize};

use super::{CompletionParams, GatewayError, Provider};

/// One scripted reply. A rule matches when its digest equals the SHA-256 of
/// the prompt, or, without a digest, when the prompt contains every listed
/// substring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_digest: Option<String>,
    #[serde(default)]
    pub contains: Vec<String>,
    pub responses: Vec<String>,
}

impl MockRule {
    fn matches(&self, prompt: &str, digest: &str) -> bool {
        match &self.prompt_digest {
            Some(d) => d == digest,
            None => self.contains.iter().all(|s| prompt.contains(s.as_str())),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

/// Deterministic scripted provider: the first matching rule answers, and when
/// it lists several responses the choice is a hash of (prompt, seed).
#[derive(Debug, Clone)]
pub struct MockProvider {
    script: MockScript,
}

impl MockProvider {
    pub fn new(script: MockScript) -> Self {
        MockProvider { script }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text).map(MockProvider::new)
    }
}

pub fn prompt_digest(prompt: &str) -> String {
    sha256_hex(prompt.as_bytes())
}

fn pick(prompt: &str, seed: u64, n: usize) -> usize {
    let mut bytes = prompt.as_bytes().to_vec();
    bytes.extend_from_slice(&seed.to_le_bytes());
    let h = sha256_hex(&bytes);
    (u64::from_str_radix(&h[..16], 16).expect("hex digest") % n as u64) as usize
}

impl Provider for MockProvider {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, GatewayError> {
        let digest = prompt_digest(prompt);
        let rule = self
            .script
            .rules
            .iter()
            .find(|r| r.matches(prompt, &digest) && !r.responses.is_empty())
            .ok_or_else(|| GatewayError::Provider(format!("mock script has no rule for prompt {}", &digest[..12])))?;
        let i = if rule.responses.len() == 1 {
            0
        } else {
            pick(prompt, params.seed, rule.responses.len())
        };
        Ok(rule.responses[i].clone())
    }
}
