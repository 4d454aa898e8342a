//! Versioned prompt templates with `{{name}}` placeholders.
//!
//! Lines starting with `#` are metadata and are stripped when a template is
//! loaded.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("missing template {name} ({detail})")]
    Missing { name: String, detail: String },
    #[error("template {template} has no value for placeholder {placeholder}")]
    Unbound { template: String, placeholder: String },
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../templates/", $name, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin!(
    "object_description",
    "background_description",
    "response_system",
    "response_format",
    "repair",
    "tool_result",
    "mcq_answer",
    "question_generation",
    "question_instance_attribute",
    "question_instance_counting",
    "question_visual_reasoning",
    "question_spatial_reasoning",
);

/// Names every template set must provide.
pub fn required_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Templates {
    entries: BTreeMap<String, String>,
}

fn strip_metadata(text: &str) -> String {
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    body.join("\n").trim_end().to_string()
}

impl Templates {
    /// Templates compiled into the library.
    pub fn builtin() -> Self {
        Self {
            entries: BUILTIN
                .iter()
                .map(|(n, t)| (n.to_string(), strip_metadata(t)))
                .collect(),
        }
    }

    /// Loads `<name>.txt` for every required template from `dir`.
    pub fn load(dir: &Path) -> Result<Self, TemplateError> {
        let mut entries = BTreeMap::new();
        for name in required_names() {
            let path = dir.join(format!("{name}.txt"));
            let text = fs::read_to_string(&path).map_err(|e| TemplateError::Missing {
                name: name.to_string(),
                detail: format!("{}: {e}", path.display()),
            })?;
            entries.insert(name.to_string(), strip_metadata(&text));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, name: &str) -> Result<&str, TemplateError> {
        self.entries
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| TemplateError::Missing {
                name: name.to_string(),
                detail: "not loaded".into(),
            })
    }

    pub fn remove(&mut self, name: &str) {
        self.entries.remove(name);
    }

    /// Fills every placeholder of `name`; leftover placeholders are an error.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::new();
        let mut rest = self.get(name)?;
        while let Some(start) = rest.find("{{") {
            let Some(len) = rest[start + 2..].find("}}") else {
                break;
            };
            let key = &rest[start + 2..start + 2 + len];
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| TemplateError::Unbound {
                    template: name.to_string(),
                    placeholder: key.to_string(),
                })?;
            out.push_str(&rest[..start]);
            out.push_str(value);
            rest = &rest[start + 2 + len + 2..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

impl Default for Templates {
    fn default() -> Self {
        Self::builtin()
    }
}
