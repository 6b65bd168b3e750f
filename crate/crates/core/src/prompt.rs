//! Prompt templates and validated rendering.
//!
//! Templates ship as text files under `assets/templates/` together with a
//! `manifest.json` that declares each template's placeholders. The bundled
//! set is compiled in; [`TemplateSet::load_dir`] reads an alternative
//! directory with the same layout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sandwich::Slot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Generic,
    Contextual,
    React,
    Paraphrase,
    FallacyLayer,
    Fact2WithEvidence,
    Fact2Plain,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::Generic,
        TemplateId::Contextual,
        TemplateId::React,
        TemplateId::Paraphrase,
        TemplateId::FallacyLayer,
        TemplateId::Fact2WithEvidence,
        TemplateId::Fact2Plain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Generic => "generic",
            TemplateId::Contextual => "contextual",
            TemplateId::React => "react",
            TemplateId::Paraphrase => "paraphrase",
            TemplateId::FallacyLayer => "fallacy_layer",
            TemplateId::Fact2WithEvidence => "fact2_with_evidence",
            TemplateId::Fact2Plain => "fact2_plain",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

/// Maximum words per debunking layer.
pub fn word_limit_of(slot: Slot) -> usize {
    match slot {
        Slot::Fact1 | Slot::Myth | Slot::Fact2 => 30,
        Slot::Fallacy => 40,
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("missing binding for placeholder {{{0}}}")]
    MissingPlaceholder(String),
    #[error("binding for placeholder {{{0}}} is empty")]
    EmptyBinding(String),
    #[error("template {template}: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
    #[error("template manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestEntry {
    id: TemplateId,
    file: String,
    placeholders: Vec<String>,
    #[serde(default)]
    may_be_empty: Vec<String>,
    #[serde(default)]
    stop_sequences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub body: String,
    pub required_placeholders: BTreeSet<String>,
    /// Subset of `required_placeholders` that may be bound to empty text.
    pub may_be_empty: BTreeSet<String>,
    pub stop_sequences: Vec<String>,
}

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("static regex"))
}

/// Names of all `{name}` tokens in `text`.
pub fn placeholders_in(text: &str) -> BTreeSet<String> {
    placeholder_regex()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .collect()
}

impl PromptTemplate {
    fn from_manifest(entry: ManifestEntry, body: &str) -> Result<Self, PromptError> {
        let body = body.strip_suffix('\n').unwrap_or(body).to_string();
        let required: BTreeSet<String> = entry.placeholders.into_iter().collect();
        let found = placeholders_in(&body);
        if found != required {
            return Err(PromptError::InvalidTemplate {
                template: entry.id.to_string(),
                reason: format!("body placeholders {found:?} differ from manifest {required:?}"),
            });
        }
        let may_be_empty: BTreeSet<String> = entry.may_be_empty.into_iter().collect();
        if !may_be_empty.is_subset(&required) {
            return Err(PromptError::InvalidTemplate {
                template: entry.id.to_string(),
                reason: "may_be_empty names a placeholder the body does not use".to_string(),
            });
        }
        Ok(Self {
            template_id: entry.id,
            body,
            required_placeholders: required,
            may_be_empty,
            stop_sequences: entry.stop_sequences,
        })
    }

    /// Substitutes every placeholder in a single pass; bound values are
    /// never rescanned for placeholders.
    pub fn render(
        &self,
        bindings: &BTreeMap<String, String>,
    ) -> Result<RenderedPrompt, PromptError> {
        for name in &self.required_placeholders {
            match bindings.get(name) {
                None => return Err(PromptError::MissingPlaceholder(name.clone())),
                Some(v) if v.trim().is_empty() && !self.may_be_empty.contains(name) => {
                    return Err(PromptError::EmptyBinding(name.clone()))
                }
                Some(_) => {}
            }
        }
        let user_text = placeholder_regex()
            .replace_all(&self.body, |caps: &regex::Captures<'_>| {
                bindings[&caps[1]].clone()
            })
            .into_owned();
        let provenance = bindings
            .iter()
            .filter(|(k, _)| self.required_placeholders.contains(*k))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Ok(RenderedPrompt {
            template_id: self.template_id,
            system_text: None,
            user_text,
            stop_sequences: self.stop_sequences.clone(),
            provenance,
        })
    }
}

/// A prompt ready for the chat gateway.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template_id: TemplateId,
    pub system_text: Option<String>,
    pub user_text: String,
    pub stop_sequences: Vec<String>,
    /// The bindings that were substituted.
    pub provenance: BTreeMap<String, String>,
}

/// Summary row for [`TemplateSet::list`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TemplateInfo {
    pub template_id: TemplateId,
    pub required_placeholders: BTreeSet<String>,
}

const MANIFEST: &str = include_str!("../assets/templates/manifest.json");

fn bundled_body(file: &str) -> Option<&'static str> {
    Some(match file {
        "generic.txt" => include_str!("../assets/templates/generic.txt"),
        "contextual.txt" => include_str!("../assets/templates/contextual.txt"),
        "react.txt" => include_str!("../assets/templates/react.txt"),
        "paraphrase.txt" => include_str!("../assets/templates/paraphrase.txt"),
        "fallacy_layer.txt" => include_str!("../assets/templates/fallacy_layer.txt"),
        "fact2_with_evidence.txt" => include_str!("../assets/templates/fact2_with_evidence.txt"),
        "fact2_plain.txt" => include_str!("../assets/templates/fact2_plain.txt"),
        _ => return None,
    })
}

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> &'static TemplateSet {
        static SET: OnceLock<TemplateSet> = OnceLock::new();
        SET.get_or_init(|| {
            TemplateSet::from_manifest(MANIFEST, |file| {
                bundled_body(file).map(str::to_string).ok_or_else(|| {
                    std::io::Error::new(std::io::ErrorKind::NotFound, file.to_string())
                })
            })
            .expect("bundled templates are valid")
        })
    }

    /// Loads `manifest.json` and the template files it names from `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let manifest = std::fs::read_to_string(dir.join("manifest.json"))?;
        Self::from_manifest(&manifest, |file| std::fs::read_to_string(dir.join(file)))
    }

    fn from_manifest(
        manifest: &str,
        mut read: impl FnMut(&str) -> std::io::Result<String>,
    ) -> Result<Self, PromptError> {
        let entries: Vec<ManifestEntry> = serde_json::from_str(manifest)?;
        let mut templates = BTreeMap::new();
        for entry in entries {
            let body = read(&entry.file)?;
            let id = entry.id;
            if templates
                .insert(id, PromptTemplate::from_manifest(entry, &body)?)
                .is_some()
            {
                return Err(PromptError::InvalidTemplate {
                    template: id.to_string(),
                    reason: "listed twice in manifest".to_string(),
                });
            }
        }
        if let Some(missing) = TemplateId::ALL.iter().find(|t| !templates.contains_key(t)) {
            return Err(PromptError::InvalidTemplate {
                template: missing.to_string(),
                reason: "not listed in manifest".to_string(),
            });
        }
        Ok(Self { templates })
    }

    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn list(&self) -> Vec<TemplateInfo> {
        self.templates
            .values()
            .map(|t| TemplateInfo {
                template_id: t.template_id,
                required_placeholders: t.required_placeholders.clone(),
            })
            .collect()
    }

    pub fn render(
        &self,
        id: TemplateId,
        bindings: &BTreeMap<String, String>,
    ) -> Result<RenderedPrompt, PromptError> {
        self.get(id).render(bindings)
    }

    /// Renders by template name, for callers holding untyped ids.
    pub fn render_named(
        &self,
        id: &str,
        bindings: &BTreeMap<String, String>,
    ) -> Result<RenderedPrompt, PromptError> {
        self.render(id.parse()?, bindings)
    }
}

/// Convenience for building binding maps from string pairs.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

/// Removes Mixtral/Llama-style turn delimiters for backends that apply
/// their own chat formatting.
pub fn strip_chat_delimiters(text: &str) -> String {
    const TOKENS: [&str; 6] = ["<<SYS>>", "<</SYS>>", "[INST]", "[/INST]", "<s>", "</s>"];
    let mut out = text.to_string();
    for token in TOKENS {
        out = out.replace(token, "");
    }
    out
}
