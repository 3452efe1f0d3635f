//! Run configuration: one JSON document naming the inputs, the provider, the
//! evolution parameters and where artifacts go.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use cae_core::evolution::EvolutionConfig;
use cae_core::model::{ProblemSpec, RuleSet, ValidationRule};
use serde::{Deserialize, Serialize};

use crate::domains::{domain_for, Domain};
use crate::engine::Engine;
use crate::gateway::{Budget, CompletionParams, Gateway, KnowledgeBase, LiveProvider, MockProvider, TemplateSet, Transcript};
use crate::sandbox::{ExecutionLimits, Sandbox, ShimCommand};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{field} path does not exist: {path}")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderConfig {
    Mock {
        script: PathBuf,
    },
    /// Endpoint and key come from `CAE_LLM_URL` / `CAE_LLM_KEY`.
    Live {
        model: String,
        #[serde(default = "default_timeout")]
        timeout: f64,
    },
    Replay {
        transcript: PathBuf,
    },
}

fn default_timeout() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSettings {
    #[serde(default = "default_provider_id")]
    pub provider_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_provider_id() -> String {
    "default".into()
}

fn default_temperature() -> f64 {
    0.7
}

fn default_max_tokens() -> u32 {
    2048
}

impl Default for CompletionSettings {
    fn default() -> Self {
        CompletionSettings {
            provider_id: default_provider_id(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
        }
    }
}

fn default_shim() -> ShimCommand {
    ShimCommand::new("cae-stub-shim")
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: PathBuf,
    pub rules: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge_base: Option<PathBuf>,
    #[serde(default)]
    pub kb_tags: Vec<String>,
    pub domain_id: String,
    pub evolution: EvolutionConfig,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub completion: CompletionSettings,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub limits: ExecutionLimits,
    #[serde(default = "default_shim")]
    pub shim: ShimCommand,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ConfigError> {
    serde_json::from_str(&read(path)?).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn must_exist(field: &'static str, p: &Path) -> Result<(), ConfigError> {
    if p.exists() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath {
            field,
            path: p.to_path_buf(),
        })
    }
}

impl RunConfig {
    /// Parses `path`, resolves relative paths against its directory and checks
    /// that every input exists. The output directory is created on demand.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = parse(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            path: base.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.resolve_paths(base);
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.spec);
        resolve(base, &mut self.rules);
        if let Some(p) = &mut self.knowledge_base {
            resolve(base, p);
        }
        if let Some(p) = &mut self.templates_dir {
            resolve(base, p);
        }
        match &mut self.provider {
            ProviderConfig::Mock { script } => resolve(base, script),
            ProviderConfig::Replay { transcript } => resolve(base, transcript),
            ProviderConfig::Live { .. } => {}
        }
        if self.shim.program.components().count() > 1 {
            resolve(base, &mut self.shim.program);
        }
        resolve(base, &mut self.output_dir);
    }

    fn check(&self) -> Result<(), ConfigError> {
        must_exist("spec", &self.spec)?;
        must_exist("rules", &self.rules)?;
        if let Some(p) = &self.knowledge_base {
            must_exist("knowledge_base", p)?;
        }
        if let Some(p) = &self.templates_dir {
            must_exist("templates_dir", p)?;
        }
        match &self.provider {
            ProviderConfig::Mock { script } => must_exist("provider.script", script)?,
            ProviderConfig::Replay { transcript } => must_exist("provider.transcript", transcript)?,
            ProviderConfig::Live { timeout, .. } if timeout.is_nan() || *timeout <= 0.0 => {
                return Err(ConfigError::Invalid("provider.timeout must be positive".into()))
            }
            ProviderConfig::Live { .. } => {}
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be at least 1".into()));
        }
        self.limits.validate().map_err(ConfigError::Invalid)?;
        self.evolution.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn completion_params(&self) -> CompletionParams {
        CompletionParams {
            provider_id: self.completion.provider_id.clone(),
            temperature: self.completion.temperature,
            max_tokens: self.completion.max_tokens,
            seed: self.evolution.rng_seed,
        }
    }

    /// Loads and cross-checks every input the engine needs.
    pub fn prepare(&self) -> Result<Prepared, ConfigError> {
        let spec: ProblemSpec = parse(&self.spec)?;
        let rules: Vec<ValidationRule> = parse(&self.rules)?;
        let rules = RuleSet::new(rules).map_err(|e| ConfigError::Invalid(format!("rules: {e}")))?;
        spec.validate(&rules).map_err(|e| ConfigError::Invalid(format!("spec: {e}")))?;
        if spec.domain_id != self.domain_id {
            return Err(ConfigError::Invalid(format!(
                "spec is bound to domain `{}` but the config selects `{}`",
                spec.domain_id, self.domain_id
            )));
        }
        let kb = match &self.knowledge_base {
            Some(p) => parse(p)?,
            None => KnowledgeBase::default(),
        };
        let templates = match &self.templates_dir {
            Some(dir) => TemplateSet::load_dir(dir).map_err(|e| ConfigError::Io {
                path: dir.clone(),
                message: e.to_string(),
            })?,
            None => TemplateSet::default(),
        };
        let base = self.rules.parent().unwrap_or(Path::new("."));
        let domain = domain_for(&self.domain_id, base).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let sandbox = Sandbox::new(self.shim.clone(), self.limits, self.workers).map_err(ConfigError::Invalid)?;
        Ok(Prepared {
            spec,
            rules,
            kb,
            templates,
            domain,
            sandbox,
        })
    }

    /// The gateway for this config; `record` mirrors the transcript to a file.
    pub fn gateway(&self, record: Option<&Path>) -> Result<Gateway, ConfigError> {
        let id = self.completion.provider_id.clone();
        let gateway = match &self.provider {
            ProviderConfig::Mock { script } => {
                let mock = MockProvider::from_json(&read(script)?).map_err(|e| ConfigError::Parse {
                    path: script.clone(),
                    message: e.to_string(),
                })?;
                Gateway::new(self.budget).register(id, Arc::new(mock))
            }
            ProviderConfig::Live { model, timeout } => {
                let live = LiveProvider::from_env(model.clone(), Duration::from_secs_f64(*timeout))
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Gateway::new(self.budget).register(id, Arc::new(live))
            }
            ProviderConfig::Replay { transcript } => {
                let t = Transcript::load(transcript).map_err(|e| ConfigError::Parse {
                    path: transcript.clone(),
                    message: e.to_string(),
                })?;
                Gateway::replaying(self.budget, &t)
            }
        };
        match record {
            Some(p) => gateway.record_to(p).map_err(|e| ConfigError::Io {
                path: p.to_path_buf(),
                message: e.to_string(),
            }),
            None => Ok(gateway),
        }
    }
}

/// Loaded inputs that an [`Engine`] borrows.
pub struct Prepared {
    pub spec: ProblemSpec,
    pub rules: RuleSet,
    pub kb: KnowledgeBase,
    pub templates: TemplateSet,
    pub domain: Box<dyn Domain>,
    pub sandbox: Sandbox,
}

impl Prepared {
    pub fn engine<'a>(&'a self, cfg: &RunConfig, gateway: &'a Gateway) -> Engine<'a> {
        Engine::new(
            gateway,
            &self.templates,
            &self.sandbox,
            self.domain.as_ref(),
            &self.spec,
            &self.rules,
            &self.kb,
            cfg.evolution.clone(),
            cfg.completion_params(),
        )
        .with_kb_tags(cfg.kb_tags.clone())
    }
}
