use std::time::Duration;

use serde_json::{json, Value};

use super::{CompletionParams, GatewayError, Provider};

pub const URL_VAR: &str = "CAE_LLM_URL";
pub const KEY_VAR: &str = "CAE_LLM_KEY";

/// OpenAI-style chat-completion endpoint. The base URL and key come from the
/// environment; `model` and the timeout from the run config.
#[derive(Debug, Clone)]
pub struct LiveProvider {
    base_url: String,
    key: Option<String>,
    model: String,
    timeout: Duration,
}

impl LiveProvider {
    pub fn new(base_url: impl Into<String>, key: Option<String>, model: impl Into<String>, timeout: Duration) -> Self {
        LiveProvider {
            base_url: base_url.into(),
            key,
            model: model.into(),
            timeout,
        }
    }

    pub fn from_env(model: impl Into<String>, timeout: Duration) -> Result<Self, GatewayError> {
        let url = std::env::var(URL_VAR).map_err(|_| GatewayError::ProviderUnavailable(format!("{URL_VAR} is not set")))?;
        Ok(LiveProvider::new(url, std::env::var(KEY_VAR).ok(), model, timeout))
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

impl Provider for LiveProvider {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String, GatewayError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "seed": params.seed,
        });
        let mut request = agent.post(self.endpoint());
        if let Some(key) = &self.key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let reply: Value = match request.send_json(&body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_json()
                .map_err(|e| GatewayError::Provider(format!("unreadable response: {e}")))?,
            Err(ureq::Error::Timeout(_)) => return Err(GatewayError::Timeout(self.timeout.as_secs_f64())),
            Err(ureq::Error::Io(e)) if e.kind() == std::io::ErrorKind::TimedOut => {
                return Err(GatewayError::Timeout(self.timeout.as_secs_f64()))
            }
            Err(ureq::Error::StatusCode(code)) => {
                return Err(GatewayError::ProviderUnavailable(format!("HTTP {code} from {}", self.endpoint())))
            }
            Err(e) => return Err(GatewayError::ProviderUnavailable(e.to_string())),
        };
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::Provider("response has no choices[0].message.content".into()))
    }
}
