//! Versioned prompt templates with `{{name}}` placeholders.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template {template} references placeholder {{{{{placeholder}}}}} which was not supplied")]
    MissingPlaceholder { template: String, placeholder: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub body: &'static str,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([a-z_][a-z0-9_]*)\}\}").unwrap())
}

impl PromptTemplate {
    pub const fn new(name: &'static str, body: &'static str) -> Self {
        Self { name, body }
    }

    pub fn placeholders(&self) -> Vec<&str> {
        let mut names: Vec<&str> = placeholder_re()
            .captures_iter(self.body)
            .map(|c| c.get(1).unwrap().as_str())
            .collect();
        names.sort_unstable();
        names.dedup();
        names
    }

    /// First 12 hex digits of the SHA-256 of the body.
    pub fn version(&self) -> String {
        let digest = Sha256::digest(self.body.as_bytes());
        hex::encode(digest)[..12].to_string()
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let lookup: BTreeMap<&str, &str> = values.iter().copied().collect();
        for name in self.placeholders() {
            if !lookup.contains_key(name) {
                return Err(TemplateError::MissingPlaceholder {
                    template: self.name.to_string(),
                    placeholder: name.to_string(),
                });
            }
        }
        Ok(placeholder_re()
            .replace_all(self.body, |c: &regex::Captures<'_>| {
                lookup[c.get(1).unwrap().as_str()].to_string()
            })
            .into_owned())
    }
}

pub const EXTRACT_EVENTS: PromptTemplate =
    PromptTemplate::new("extract_events", include_str!("../prompts/extract_events.txt"));
pub const SYNTHESIZE_MEMORY: PromptTemplate =
    PromptTemplate::new("synthesize_memory", include_str!("../prompts/synthesize_memory.txt"));
pub const EXPLORE: PromptTemplate = PromptTemplate::new("explore", include_str!("../prompts/explore.txt"));
pub const PLAN: PromptTemplate = PromptTemplate::new("plan", include_str!("../prompts/plan.txt"));
pub const MERGE_TIMELINE: PromptTemplate =
    PromptTemplate::new("merge_timeline", include_str!("../prompts/merge_timeline.txt"));
pub const REWRITE_QUERY: PromptTemplate =
    PromptTemplate::new("rewrite_query", include_str!("../prompts/rewrite_query.txt"));
pub const GENERATE_TIMELINE: PromptTemplate =
    PromptTemplate::new("generate_timeline", include_str!("../prompts/generate_timeline.txt"));
pub const REFINE_QUERY: PromptTemplate =
    PromptTemplate::new("refine_query", include_str!("../prompts/refine_query.txt"));

pub const REPAIR_JSON: &str = "Return only the JSON array.";

pub fn all() -> [PromptTemplate; 8] {
    [
        EXTRACT_EVENTS,
        SYNTHESIZE_MEMORY,
        EXPLORE,
        PLAN,
        MERGE_TIMELINE,
        REWRITE_QUERY,
        GENERATE_TIMELINE,
        REFINE_QUERY,
    ]
}

/// Template name to version hash, recorded in run manifests.
pub fn versions() -> BTreeMap<String, String> {
    all()
        .iter()
        .map(|t| (t.name.to_string(), t.version()))
        .collect()
}

/// Extracts the outermost JSON array from a model reply that may carry prose
/// or code fences around it.
pub fn extract_json_array(reply: &str) -> Option<serde_json::Value> {
    let start = reply.find('[')?;
    let end = reply.rfind(']')?;
    if end < start {
        return None;
    }
    serde_json::from_str::<serde_json::Value>(&reply[start..=end])
        .ok()
        .filter(serde_json::Value::is_array)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_fills_placeholders() {
        let t = PromptTemplate::new("t", "Hello {{name}}, {{name}}! {\"json\": 1}");
        assert_eq!(t.render(&[("name", "ada")]).unwrap(), "Hello ada, ada! {\"json\": 1}");
    }

    #[test]
    fn missing_placeholder_is_an_error() {
        let t = PromptTemplate::new("t", "{{a}} {{b}}");
        assert_eq!(
            t.render(&[("a", "x")]),
            Err(TemplateError::MissingPlaceholder {
                template: "t".into(),
                placeholder: "b".into()
            })
        );
    }

    #[test]
    fn shipped_templates_render_with_their_placeholders() {
        for t in all() {
            let names = t.placeholders();
            let values: Vec<(&str, &str)> = names.iter().map(|n| (*n, "x")).collect();
            let rendered = t.render(&values).unwrap();
            assert!(!rendered.contains("{{"), "{}", t.name);
            assert_eq!(t.version().len(), 12);
        }
    }

    #[test]
    fn json_array_extraction() {
        let v = extract_json_array("Sure:\n```json\n[{\"a\": 1}]\n```").unwrap();
        assert_eq!(v, serde_json::json!([{"a": 1}]));
        assert!(extract_json_array("no array").is_none());
        assert!(extract_json_array("[broken").is_none());
    }
}
