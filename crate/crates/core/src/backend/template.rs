use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::parse::{extract_json_objects, parse_answer};

pub const PLACEHOLDER: &str = "{text}";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    ZeroShot,
    FewShot,
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {id}: body must contain exactly one {PLACEHOLDER} placeholder (found {found})")]
    Placeholder { id: String, found: usize },
    #[error("template {0}: few-shot templates need at least one well-formed example answer")]
    MissingExample(String),
    #[error("cannot render an empty text")]
    EmptyText,
    #[error("template file {path}: {message}")]
    File { path: String, message: String },
    #[error("unknown builtin template {0:?}")]
    UnknownBuiltin(String),
}

/// A versioned prompt with a single `{text}` slot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromptTemplate {
    template_id: String,
    version: String,
    style: PromptStyle,
    body: String,
    /// Offset of the placeholder in `body`.
    #[serde(skip)]
    slot: usize,
}

#[derive(Deserialize)]
struct TemplateFile {
    template_id: String,
    version: String,
    style: PromptStyle,
    body: String,
}

const BUILTIN_ZERO_SHOT: &str = include_str!("../../templates/alignment_zero_shot.toml");
const BUILTIN_FEW_SHOT: &str = include_str!("../../templates/alignment_few_shot.toml");
const BUILTIN_CATEGORIZE: &str = include_str!("../../templates/categorize_subreddit.toml");

impl PromptTemplate {
    pub fn new(
        template_id: impl Into<String>,
        version: impl Into<String>,
        style: PromptStyle,
        body: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let template_id = template_id.into();
        let body = body.into();
        let found = body.matches(PLACEHOLDER).count();
        if found != 1 {
            return Err(TemplateError::Placeholder { id: template_id, found });
        }
        let slot = body.find(PLACEHOLDER).expect("counted above");
        if style == PromptStyle::FewShot {
            let without_slot = body.replacen(PLACEHOLDER, "", 1);
            let has_example = extract_json_objects(&without_slot)
                .iter()
                .any(|obj| parse_answer(&serde_json::Value::Object(obj.clone()).to_string()).is_ok());
            if !has_example {
                return Err(TemplateError::MissingExample(template_id));
            }
        }
        Ok(PromptTemplate { template_id, version: version.into(), style, body, slot })
    }

    pub fn from_toml_str(s: &str, origin: &str) -> Result<Self, TemplateError> {
        let f: TemplateFile =
            toml::from_str(s).map_err(|e| TemplateError::File { path: origin.to_string(), message: e.to_string() })?;
        PromptTemplate::new(f.template_id, f.version, f.style, f.body)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| TemplateError::File { path: path.display().to_string(), message: e.to_string() })?;
        PromptTemplate::from_toml_str(&s, &path.display().to_string())
    }

    /// Bundled templates: `alignment_zero_shot`, `alignment_few_shot`,
    /// `categorize_subreddit`.
    pub fn builtin(name: &str) -> Result<Self, TemplateError> {
        let src = match name {
            "alignment_zero_shot" => BUILTIN_ZERO_SHOT,
            "alignment_few_shot" => BUILTIN_FEW_SHOT,
            "categorize_subreddit" => BUILTIN_CATEGORIZE,
            other => return Err(TemplateError::UnknownBuiltin(other.to_string())),
        };
        PromptTemplate::from_toml_str(src, name)
    }

    /// `builtin:<name>` or a file path.
    pub fn resolve(spec: &str) -> Result<Self, TemplateError> {
        match spec.strip_prefix("builtin:") {
            Some(name) => PromptTemplate::builtin(name),
            None => PromptTemplate::load(Path::new(spec)),
        }
    }

    pub fn template_id(&self) -> &str {
        &self.template_id
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn style(&self) -> PromptStyle {
        self.style
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Identifier recorded with every prediction: `<id>@<version>`.
    pub fn versioned_id(&self) -> String {
        format!("{}@{}", self.template_id, self.version)
    }
}

/// Substitutes `text` at the placeholder. The text is inserted verbatim, so
/// a literal `{text}` inside it is left alone.
pub fn render_prompt(template: &PromptTemplate, text: &str) -> Result<String, TemplateError> {
    if text.is_empty() {
        return Err(TemplateError::EmptyText);
    }
    let (head, tail) = template.body.split_at(template.slot);
    let tail = &tail[PLACEHOLDER.len()..];
    let mut out = String::with_capacity(head.len() + text.len() + tail.len());
    out.push_str(head);
    out.push_str(text);
    out.push_str(tail);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_placeholder() {
        let t = PromptTemplate::new("t", "1", PromptStyle::ZeroShot, "Classify: {text}").unwrap();
        assert_eq!(render_prompt(&t, "hello").unwrap(), "Classify: hello");
    }

    #[test]
    fn literal_placeholder_in_text_is_not_expanded() {
        let t = PromptTemplate::new("t", "1", PromptStyle::ZeroShot, "A {text} B").unwrap();
        let out = render_prompt(&t, "x {text} y").unwrap();
        // string oracle: prefix + text + suffix
        assert_eq!(out, format!("{}{}{}", "A ", "x {text} y", " B"));
    }

    #[test]
    fn empty_text_is_an_error() {
        let t = PromptTemplate::new("t", "1", PromptStyle::ZeroShot, "{text}").unwrap();
        assert!(matches!(render_prompt(&t, ""), Err(TemplateError::EmptyText)));
    }

    #[test]
    fn placeholder_count_is_enforced() {
        assert!(PromptTemplate::new("t", "1", PromptStyle::ZeroShot, "no slot").is_err());
        assert!(PromptTemplate::new("t", "1", PromptStyle::ZeroShot, "{text} {text}").is_err());
    }

    #[test]
    fn few_shot_requires_example_answer() {
        let err = PromptTemplate::new("t", "1", PromptStyle::FewShot, "Answer in JSON. {text}");
        assert!(matches!(err, Err(TemplateError::MissingExample(_))));
        let ok = PromptTemplate::new(
            "t",
            "1",
            PromptStyle::FewShot,
            "Example output: {\"party\": \"Democratic\", \"confidence\": 2}\nText: {text}",
        );
        assert!(ok.is_ok());
    }

    #[test]
    fn builtins_are_valid() {
        let few = PromptTemplate::builtin("alignment_few_shot").unwrap();
        assert_eq!(few.style(), PromptStyle::FewShot);
        let rendered = render_prompt(&few, "some text").unwrap();
        let example_block = few.body().split(PLACEHOLDER).next().unwrap();
        assert!(rendered.contains(example_block));
        assert_eq!(PromptTemplate::builtin("alignment_zero_shot").unwrap().style(), PromptStyle::ZeroShot);
        PromptTemplate::builtin("categorize_subreddit").unwrap();
        assert!(PromptTemplate::resolve("builtin:nope").is_err());
    }
}
