//! Versioned prompt templates with `{{placeholder}}` substitution.
//!
//! A template's id is its file stem (`observer.v1.txt` has id `observer.v1`).
//! Built-in templates ship with the crate; a directory of `.txt` files can
//! override or extend them.

use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const EVAL_INTERPRET: &str = "eval.interpret.v1";
pub const OBSERVER: &str = "observer.v1";
pub const INTERPRETER: &str = "interpreter.v1";
pub const ZEITGEIST: &str = "zeitgeist.v1";
pub const LISTENER: &str = "listener.v1";
pub const CRITIQUE: &str = "critique.v1";
pub const FUSION_INTERPRET: &str = "fusion.interpret.v1";
pub const FUSION_EXTRACT: &str = "fusion.extract.v1";
pub const FUSION_MERGE: &str = "fusion.merge.v1";

const BUILTIN: &[(&str, &str)] = &[
    (EVAL_INTERPRET, include_str!("../assets/prompts/eval.interpret.v1.txt")),
    (OBSERVER, include_str!("../assets/prompts/observer.v1.txt")),
    (INTERPRETER, include_str!("../assets/prompts/interpreter.v1.txt")),
    (ZEITGEIST, include_str!("../assets/prompts/zeitgeist.v1.txt")),
    (LISTENER, include_str!("../assets/prompts/listener.v1.txt")),
    (CRITIQUE, include_str!("../assets/prompts/critique.v1.txt")),
    (FUSION_INTERPRET, include_str!("../assets/prompts/fusion.interpret.v1.txt")),
    (FUSION_EXTRACT, include_str!("../assets/prompts/fusion.extract.v1.txt")),
    (FUSION_MERGE, include_str!("../assets/prompts/fusion.merge.v1.txt")),
];

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("unknown prompt template {0}")]
    Unknown(String),
    #[error("template {template} needs placeholder {{{{{name}}}}}")]
    MissingValue { template: String, name: String },
    #[error("template {template} has an unterminated placeholder")]
    Unterminated { template: String },
    #[error("reading prompt directory {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: BTreeMap<String, String>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        Self {
            templates: BUILTIN
                .iter()
                .map(|(id, body)| (id.to_string(), body.to_string()))
                .collect(),
        }
    }

    /// Built-ins overlaid with every `*.txt` file in `dir`.
    pub fn with_dir(dir: &Path) -> Result<Self, PromptError> {
        let io = |source| PromptError::Io {
            path: dir.display().to_string(),
            source,
        };
        let mut lib = Self::builtin();
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(io)?;
        entries.sort_by_key(|e| e.path());
        for entry in entries {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let body = std::fs::read_to_string(&path).map_err(io)?;
            lib.templates.insert(id.to_string(), body);
        }
        Ok(lib)
    }

    pub fn insert(&mut self, id: impl Into<String>, body: impl Into<String>) {
        self.templates.insert(id.into(), body.into());
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    /// Writes every template as `<id>.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (id, body) in &self.templates {
            std::fs::write(dir.join(format!("{id}.txt")), body)?;
        }
        Ok(())
    }

    pub fn render(&self, id: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let template = self
            .templates
            .get(id)
            .ok_or_else(|| PromptError::Unknown(id.to_string()))?;
        let mut out = String::with_capacity(template.len());
        let mut rest = template.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| PromptError::Unterminated {
                template: id.to_string(),
            })?;
            let name = after[..end].trim();
            let value = values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::MissingValue {
                    template: id.to_string(),
                    name: name.to_string(),
                })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}
