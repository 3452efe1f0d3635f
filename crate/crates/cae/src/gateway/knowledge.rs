use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub snippet_id: String,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "KnowledgeFile", into = "KnowledgeFile")]
pub struct KnowledgeBase {
    snippets: Vec<Snippet>,
}

#[derive(Serialize, Deserialize)]
struct KnowledgeFile {
    snippets: Vec<Snippet>,
}

impl TryFrom<KnowledgeFile> for KnowledgeBase {
    type Error = String;

    fn try_from(f: KnowledgeFile) -> Result<Self, String> {
        KnowledgeBase::new(f.snippets)
    }
}

impl From<KnowledgeBase> for KnowledgeFile {
    fn from(kb: KnowledgeBase) -> Self {
        KnowledgeFile { snippets: kb.snippets }
    }
}

impl KnowledgeBase {
    pub fn new(mut snippets: Vec<Snippet>) -> Result<Self, String> {
        snippets.sort_by(|a, b| a.snippet_id.cmp(&b.snippet_id));
        if let Some(w) = snippets.windows(2).find(|w| w[0].snippet_id == w[1].snippet_id) {
            return Err(format!("duplicate snippet id `{}`", w[0].snippet_id));
        }
        Ok(KnowledgeBase { snippets })
    }

    pub fn snippets(&self) -> &[Snippet] {
        &self.snippets
    }

    /// Every snippet carrying at least one of `tags`, in snippet_id order.
    pub fn select(&self, tags: &[String]) -> Vec<&Snippet> {
        self.snippets
            .iter()
            .filter(|s| tags.iter().any(|t| s.tags.contains(t)))
            .collect()
    }

    pub fn render(&self, tags: &[String]) -> String {
        let parts: Vec<String> = self
            .select(tags)
            .into_iter()
            .map(|s| format!("## {}\n{}", s.title, s.text.trim_end()))
            .collect();
        if parts.is_empty() {
            "(none)".to_string()
        } else {
            parts.join("\n\n")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snippet(id: &str, tags: &[&str]) -> Snippet {
        Snippet {
            snippet_id: id.into(),
            title: id.to_uppercase(),
            text: format!("text of {id}"),
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }

    #[test]
    fn selection_is_ordered_by_id() {
        let kb = KnowledgeBase::new(vec![snippet("b", &["x"]), snippet("a", &["x", "y"]), snippet("c", &["z"])]).unwrap();
        let ids: Vec<&str> = kb.select(&["x".into()]).into_iter().map(|s| s.snippet_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(kb.render(&["q".into()]), "(none)");
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(KnowledgeBase::new(vec![snippet("a", &[]), snippet("a", &[])]).is_err());
        let json = r#"{"snippets":[{"snippet_id":"a","title":"t","text":"x"},{"snippet_id":"a","title":"t","text":"y"}]}"#;
        assert!(serde_json::from_str::<KnowledgeBase>(json).is_err());
    }
}
