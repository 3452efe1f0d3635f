use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TemplateId {
    #[serde(rename = "P_s")]
    Ps,
    #[serde(rename = "P_w")]
    Pw,
    #[serde(rename = "P_f")]
    Pf,
    #[serde(rename = "reflect_short")]
    ReflectShort,
    #[serde(rename = "reflect_long")]
    ReflectLong,
    #[serde(rename = "crossover")]
    Crossover,
    #[serde(rename = "mutate")]
    Mutate,
    #[serde(rename = "recombine")]
    Recombine,
    #[serde(rename = "repair")]
    Repair,
}

impl TemplateId {
    pub const SHIPPED: [TemplateId; 8] = [
        TemplateId::Ps,
        TemplateId::Pw,
        TemplateId::ReflectShort,
        TemplateId::ReflectLong,
        TemplateId::Crossover,
        TemplateId::Mutate,
        TemplateId::Recombine,
        TemplateId::Repair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Ps => "P_s",
            TemplateId::Pw => "P_w",
            TemplateId::Pf => "P_f",
            TemplateId::ReflectShort => "reflect_short",
            TemplateId::ReflectLong => "reflect_long",
            TemplateId::Crossover => "crossover",
            TemplateId::Mutate => "mutate",
            TemplateId::Recombine => "recombine",
            TemplateId::Repair => "repair",
        }
    }

    fn file_name(self) -> String {
        format!("{}.txt", self.as_str().to_ascii_lowercase())
    }

    fn embedded(self) -> &'static str {
        match self {
            TemplateId::Ps => include_str!("../../templates/p_s.txt"),
            TemplateId::Pw => include_str!("../../templates/p_w.txt"),
            TemplateId::Pf => "{body}",
            TemplateId::ReflectShort => include_str!("../../templates/reflect_short.txt"),
            TemplateId::ReflectLong => include_str!("../../templates/reflect_long.txt"),
            TemplateId::Crossover => include_str!("../../templates/crossover.txt"),
            TemplateId::Mutate => include_str!("../../templates/mutate.txt"),
            TemplateId::Recombine => include_str!("../../templates/recombine.txt"),
            TemplateId::Repair => include_str!("../../templates/repair.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// Prompt body with `{name}` placeholders. Braces that do not enclose an
/// identifier are literal text, so JSON examples survive in bodies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    pieces: Vec<Piece>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl PromptTemplate {
    pub fn new(template_id: TemplateId, body: impl Into<String>) -> Self {
        let body = body.into();
        let mut pieces = Vec::new();
        let mut required = BTreeSet::new();
        let mut rest = body.as_str();
        let mut text = String::new();
        while let Some(open) = rest.find('{') {
            text.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    let name = &after[..close];
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Slot(name.to_string()));
                    required.insert(name.to_string());
                    rest = &after[close + 1..];
                }
                _ => {
                    text.push('{');
                    rest = after;
                }
            }
        }
        text.push_str(rest);
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        PromptTemplate {
            template_id,
            body,
            required_placeholders: required,
            pieces,
        }
    }

    /// Substitutes every placeholder verbatim. Bindings are not re-scanned.
    pub fn render<S: AsRef<str>>(&self, bindings: &BTreeMap<&str, S>) -> Result<String, GatewayError> {
        let missing: Vec<String> = self
            .required_placeholders
            .iter()
            .filter(|name| !bindings.contains_key(name.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(GatewayError::MissingPlaceholder(missing));
        }
        let mut out = String::with_capacity(self.body.len());
        for piece in &self.pieces {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => out.push_str(bindings[name.as_str()].as_ref()),
            }
        }
        Ok(out)
    }
}

/// The prompt templates of one run, loaded from a directory with the
/// built-in bodies as fallback for files that are absent.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let templates = TemplateId::SHIPPED
            .iter()
            .map(|&id| (id, PromptTemplate::new(id, id.embedded())))
            .collect();
        TemplateSet { templates }
    }
}

impl TemplateSet {
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = TemplateSet::default();
        for id in TemplateId::SHIPPED {
            let path = dir.join(id.file_name());
            if path.exists() {
                let body = std::fs::read_to_string(&path)?;
                set.templates.insert(id, PromptTemplate::new(id, body));
            }
        }
        Ok(set)
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render<S: AsRef<str>>(&self, id: TemplateId, bindings: &BTreeMap<&str, S>) -> Result<String, GatewayError> {
        self.get(id).render(bindings)
    }
}
