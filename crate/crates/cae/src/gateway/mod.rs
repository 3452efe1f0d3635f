//! Provider-agnostic access to the language model: templating, the scripted
//! mock, the HTTP provider, transcripts and replay.

mod knowledge;
mod live;
mod mock;
mod template;
mod transcript;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::sync::Semaphore;

pub use knowledge::{KnowledgeBase, Snippet};
pub use live::{LiveProvider, KEY_VAR, URL_VAR};
pub use mock::{prompt_digest, MockProvider, MockRule, MockScript};
pub use template::{PromptTemplate, TemplateId, TemplateSet};
pub use transcript::{request_digest, Replayer, Transcript, TranscriptEntry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GatewayError {
    #[error("missing placeholder(s): {}", .0.join(", "))]
    MissingPlaceholder(Vec<String>),
    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("provider timed out after {0} s")]
    Timeout(f64),
    #[error("no recorded response left for request {0}")]
    ReplayMiss(String),
    #[error("recorded provider failure: {0}")]
    Recorded(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("transcript: {0}")]
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub provider_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl CompletionParams {
    pub fn new(provider_id: impl Into<String>, seed: u64) -> Self {
        CompletionParams {
            provider_id: provider_id.into(),
            temperature: 0.7,
            max_tokens: 2048,
            seed,
        }
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, GatewayError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    #[serde(default)]
    pub max_calls: Option<usize>,
    #[serde(default)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Usage {
    pub calls: usize,
    pub tokens: usize,
}

/// Whitespace-delimited word count; providers differ in tokenisation, and the
/// budget only needs a stable, provider-independent measure.
fn approx_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

struct Sink {
    transcript: Transcript,
    file: Option<File>,
}

/// Routes completions to registered providers, or to a recorded transcript in
/// replay mode, enforcing the run budget and recording every call.
pub struct Gateway {
    providers: BTreeMap<String, Arc<dyn Provider>>,
    replay: Option<Mutex<Replayer>>,
    budget: Budget,
    usage: Mutex<Usage>,
    sink: Mutex<Sink>,
    slots: Semaphore,
}

impl Gateway {
    pub fn new(budget: Budget) -> Self {
        Gateway {
            providers: BTreeMap::new(),
            replay: None,
            budget,
            usage: Mutex::new(Usage::default()),
            sink: Mutex::new(Sink {
                transcript: Transcript::default(),
                file: None,
            }),
            slots: Semaphore::new(4),
        }
    }

    /// Answers from `recorded` instead of any provider.
    pub fn replaying(budget: Budget, recorded: &Transcript) -> Self {
        let mut g = Gateway::new(budget);
        g.replay = Some(Mutex::new(recorded.replayer()));
        g
    }

    pub fn register(mut self, provider_id: impl Into<String>, provider: Arc<dyn Provider>) -> Self {
        self.providers.insert(provider_id.into(), provider);
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.slots = Semaphore::new(limit);
        self
    }

    /// Mirrors every transcript entry to `path` as it is appended.
    pub fn record_to(self, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.sink.lock().expect("sink lock").file = Some(file);
        Ok(self)
    }

    pub fn is_replaying(&self) -> bool {
        self.replay.is_some()
    }

    pub fn usage(&self) -> Usage {
        *self.usage.lock().expect("usage lock")
    }

    pub fn transcript(&self) -> Transcript {
        self.sink.lock().expect("sink lock").transcript.clone()
    }

    fn charge(&self) -> Result<(), GatewayError> {
        let mut usage = self.usage.lock().expect("usage lock");
        if let Some(max) = self.budget.max_calls {
            if usage.calls >= max {
                return Err(GatewayError::BudgetExceeded(format!("{max} calls")));
            }
        }
        if let Some(max) = self.budget.max_tokens {
            if usage.tokens >= max {
                return Err(GatewayError::BudgetExceeded(format!("{max} tokens")));
            }
        }
        usage.calls += 1;
        Ok(())
    }

    fn record(&self, entry: TranscriptEntry) {
        let mut sink = self.sink.lock().expect("sink lock");
        if let Some(file) = sink.file.as_mut() {
            let line = serde_json::to_string(&entry).expect("entry serializes");
            if let Err(e) = writeln!(file, "{line}") {
                log::warn!("transcript write failed: {e}");
            }
        }
        sink.transcript.push(entry);
    }

    pub fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, GatewayError> {
        let provider = match &self.replay {
            Some(_) => None,
            None => Some(
                self.providers
                    .get(&params.provider_id)
                    .cloned()
                    .ok_or_else(|| GatewayError::ProviderUnavailable(format!("no provider `{}`", params.provider_id)))?,
            ),
        };
        self.charge()?;
        let _slot = self.slots.acquire();
        let entry = match (&self.replay, provider) {
            (Some(replayer), _) => {
                let digest = request_digest(prompt, params);
                replayer.lock().expect("replay lock").next(&digest)?
            }
            (None, Some(provider)) => {
                let started = Instant::now();
                let result = provider.complete(prompt, params);
                let latency = started.elapsed().as_secs_f64();
                let (response_text, error) = match result {
                    Ok(text) => (text, None),
                    Err(e) => (String::new(), Some(e)),
                };
                let entry = TranscriptEntry {
                    request_digest: request_digest(prompt, params),
                    prompt_text: prompt.to_string(),
                    response_text,
                    provider_id: params.provider_id.clone(),
                    latency,
                    error: error.as_ref().map(|e| e.to_string()),
                };
                if let Some(e) = error {
                    self.record(entry);
                    return Err(e);
                }
                entry
            }
            (None, None) => unreachable!("live mode always resolves a provider"),
        };
        self.record(entry.clone());
        if let Some(message) = entry.error {
            return Err(GatewayError::Recorded(message));
        }
        self.usage.lock().expect("usage lock").tokens += approx_tokens(prompt) + approx_tokens(&entry.response_text);
        Ok(entry.response_text)
    }
}

/// The body of the first fenced code block, or the whole response trimmed.
pub fn extract_code(response: &str) -> String {
    if let Some(start) = response.find("```") {
        let after = &response[start + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        if let Some(end) = body.find("```") {
            return body[..end].trim_end_matches(['\n', '\r']).to_string();
        }
    }
    response.trim().to_string()
}
