//! Prompt templates with `{{placeholder}}` slots.
//!
//! Placeholder names are restricted to `[A-Za-z0-9_]+`. Every `{{` in a
//! template must open a well-formed placeholder; anything else is reported as
//! [`TemplateError::MalformedPlaceholder`] with the character offset of the
//! offending `{{`. Values are substituted literally, without escaping or
//! recursive expansion.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// File extension used for prompt template files.
pub const TEMPLATE_EXTENSION: &str = "pt.txt";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("malformed placeholder at character offset {offset}")]
    MalformedPlaceholder { offset: usize },
    #[error("no value supplied for placeholder `{0}`")]
    MissingKey(String),
    #[error("a plain string input needs exactly one placeholder, template has {0}")]
    AmbiguousStringInput(usize),
    #[error("failed to read template: {0}")]
    Io(String),
}

/// One placeholder occurrence, in byte offsets of the template text.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Token {
    start: usize,
    end: usize,
    name_start: usize,
    name_end: usize,
}

fn is_name_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn scan(text: &str) -> Result<Vec<Token>, TemplateError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i + 1 < bytes.len() {
        if bytes[i] == b'{' && bytes[i + 1] == b'{' {
            let name_start = i + 2;
            let mut j = name_start;
            while j < bytes.len() && is_name_byte(bytes[j]) {
                j += 1;
            }
            let closed = j + 1 < bytes.len() && bytes[j] == b'}' && bytes[j + 1] == b'}';
            if j == name_start || !closed {
                return Err(TemplateError::MalformedPlaceholder {
                    offset: text[..i].chars().count(),
                });
            }
            tokens.push(Token {
                start: i,
                end: j + 2,
                name_start,
                name_end: j,
            });
            i = j + 2;
        } else {
            i += 1;
        }
    }
    Ok(tokens)
}

/// Distinct placeholder names in first-occurrence order.
pub fn find_placeholders(template_text: &str) -> Result<Vec<String>, TemplateError> {
    let mut names: Vec<String> = Vec::new();
    for token in scan(template_text)? {
        let name = &template_text[token.name_start..token.name_end];
        if !names.iter().any(|n| n == name) {
            names.push(name.to_string());
        }
    }
    Ok(names)
}

/// Input to [`PromptTemplate::render`].
#[derive(Debug, Clone)]
pub enum TemplateInput {
    Text(String),
    Map(HashMap<String, String>),
}

impl From<&str> for TemplateInput {
    fn from(s: &str) -> Self {
        TemplateInput::Text(s.to_string())
    }
}

impl From<String> for TemplateInput {
    fn from(s: String) -> Self {
        TemplateInput::Text(s)
    }
}

impl From<HashMap<String, String>> for TemplateInput {
    fn from(m: HashMap<String, String>) -> Self {
        TemplateInput::Map(m)
    }
}

impl<const N: usize> From<[(&str, &str); N]> for TemplateInput {
    fn from(pairs: [(&str, &str); N]) -> Self {
        TemplateInput::Map(
            pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
    placeholders: Vec<String>,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        let placeholders = find_placeholders(&text)?;
        Ok(Self { text, placeholders })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| TemplateError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::new(text)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn placeholders(&self) -> &[String] {
        &self.placeholders
    }

    pub fn has_placeholder(&self, name: &str) -> bool {
        self.placeholders.iter().any(|p| p == name)
    }

    /// Substitutes every placeholder. A plain string is accepted only for
    /// single-slot templates; a map must cover every placeholder (extra keys
    /// are ignored).
    pub fn render(&self, input: impl Into<TemplateInput>) -> Result<String, TemplateError> {
        let input = input.into();
        if let TemplateInput::Text(_) = &input {
            if self.placeholders.len() != 1 {
                return Err(TemplateError::AmbiguousStringInput(self.placeholders.len()));
            }
        }
        let lookup = |name: &str| -> Result<&str, TemplateError> {
            match &input {
                TemplateInput::Text(s) => Ok(s.as_str()),
                TemplateInput::Map(m) => m
                    .get(name)
                    .map(String::as_str)
                    .ok_or_else(|| TemplateError::MissingKey(name.to_string())),
            }
        };
        for name in &self.placeholders {
            lookup(name)?;
        }

        let tokens = scan(&self.text)?;
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for token in tokens {
            out.push_str(&self.text[last..token.start]);
            out.push_str(lookup(&self.text[token.name_start..token.name_end])?);
            last = token.end;
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}
