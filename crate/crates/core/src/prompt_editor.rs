//! Chat agent that drafts and critiques prompt templates, guided by a stored
//! guideline document for the target extractor.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{ChatMessage, Engine, EngineDescriptor, EngineError, GenerationConfig, Role};
use crate::parsing::strip_code_fences;
use crate::prompting::{PromptTemplate, TemplateError};

pub const SYSTEM_PROMPT: &str = "You are an AI assistant specializing in prompt writing and improvement. \
Your role is to help users refine, rewrite, and generate effective prompts based on guidelines provided.\n\n\
When you write or revise a prompt template, return the complete template inside one fenced code block. \
The template must have the Markdown headings \"# Task description\", \"# Schema definition\", \
\"# Output format definition\" and \"# Input\", in that order, and mark every input with a double-brace \
placeholder such as {{input}}. Frame extraction templates must ask for a JSON list of objects with the keys \
\"entity_text\" and \"attr\". Outside the code block, keep comments brief.";

pub const CHAT_TEMPLATE: &str = "# Task description\n\n\
Chat with the user following the prompt guideline below.\n\n\
# Prompt guideline\n\n\
{{prompt_guideline}}\n\n\
# User message\n\n\
{{user_message}}";

/// Section headings every accepted template must contain.
pub const REQUIRED_SECTIONS: [&str; 4] = ["Task description", "Schema definition", "Output format", "Input"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorKind {
    Basic,
    Review,
    Sentence,
    BinaryRelation,
    MulticlassRelation,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 5] = [
        ExtractorKind::Basic,
        ExtractorKind::Review,
        ExtractorKind::Sentence,
        ExtractorKind::BinaryRelation,
        ExtractorKind::MulticlassRelation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExtractorKind::Basic => "basic",
            ExtractorKind::Review => "review",
            ExtractorKind::Sentence => "sentence",
            ExtractorKind::BinaryRelation => "binary_relation",
            ExtractorKind::MulticlassRelation => "multiclass_relation",
        }
    }
}

impl FromStr for ExtractorKind {
    type Err = EditorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| EditorError::UnknownExtractorKind(s.to_string()))
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum EditorError {
    #[error("unknown extractor kind {0:?}")]
    UnknownExtractorKind(String),
    #[error("no guideline for extractor kind {0}")]
    MissingGuideline(ExtractorKind),
    #[error("user message must not be empty")]
    EmptyMessage,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("template incomplete, missing: {}", .0.join(", "))]
    TemplateIncomplete(Vec<String>),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("reading guidelines: {0}")]
    Io(String),
}

/// Guideline documents keyed by extractor kind. Immutable once built.
#[derive(Debug, Clone)]
pub struct GuidelineStore {
    entries: BTreeMap<ExtractorKind, String>,
}

impl GuidelineStore {
    /// The guideline documents shipped with the crate.
    pub fn builtin() -> Self {
        let entries = [
            (ExtractorKind::Basic, include_str!("../assets/guidelines/basic.md")),
            (ExtractorKind::Review, include_str!("../assets/guidelines/review.md")),
            (ExtractorKind::Sentence, include_str!("../assets/guidelines/sentence.md")),
            (ExtractorKind::BinaryRelation, include_str!("../assets/guidelines/binary_relation.md")),
            (ExtractorKind::MulticlassRelation, include_str!("../assets/guidelines/multiclass_relation.md")),
        ]
        .into_iter()
        .map(|(k, v)| (k, v.to_string()))
        .collect();
        Self { entries }
    }

    /// Loads `<kind>.md` for every extractor kind from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, EditorError> {
        let mut entries = BTreeMap::new();
        for kind in ExtractorKind::ALL {
            let path = dir.as_ref().join(format!("{}.md", kind.as_str()));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| EditorError::Io(format!("{}: {e}", path.display())))?;
            entries.insert(kind, text);
        }
        Ok(Self { entries })
    }

    pub fn get(&self, kind: ExtractorKind) -> Option<&str> {
        self.entries.get(&kind).map(String::as_str)
    }

    pub fn kinds(&self) -> impl Iterator<Item = ExtractorKind> + '_ {
        self.entries.keys().copied()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatSession {
    pub extractor_kind: ExtractorKind,
    pub engine: EngineDescriptor,
    history: Vec<ChatMessage>,
    #[serde(skip)]
    guideline: String,
}

impl ChatSession {
    pub fn history(&self) -> &[ChatMessage] {
        &self.history
    }

    pub fn last_reply(&self) -> Option<&str> {
        self.history
            .iter()
            .rev()
            .find(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
    }

    /// Sends one user turn and records the reply. The first turn is wrapped
    /// in the chat template together with the guideline; later turns are sent
    /// verbatim. History is left untouched when the engine fails.
    pub fn chat_turn(&mut self, engine: &Engine, user_text: &str) -> Result<String, EditorError> {
        if user_text.trim().is_empty() {
            return Err(EditorError::EmptyMessage);
        }
        let content = if self.history.len() == 1 {
            PromptTemplate::new(CHAT_TEMPLATE)?
                .render([("prompt_guideline", self.guideline.as_str()), ("user_message", user_text)])?
        } else {
            user_text.to_string()
        };
        let mut messages = self.history.clone();
        messages.push(ChatMessage::user(content));
        let reply = engine.chat(&messages, &GenerationConfig::default())?;
        messages.push(ChatMessage::assistant(reply.clone()));
        self.history = messages;
        Ok(reply)
    }
}

#[derive(Debug, Clone)]
pub struct PromptEditor {
    store: GuidelineStore,
}

impl Default for PromptEditor {
    fn default() -> Self {
        Self::new(GuidelineStore::builtin())
    }
}

impl PromptEditor {
    pub fn new(store: GuidelineStore) -> Self {
        Self { store }
    }

    pub fn store(&self) -> &GuidelineStore {
        &self.store
    }

    pub fn new_session(&self, extractor_kind: &str, engine: EngineDescriptor) -> Result<ChatSession, EditorError> {
        let kind: ExtractorKind = extractor_kind.parse()?;
        let guideline = self.store.get(kind).ok_or(EditorError::MissingGuideline(kind))?;
        Ok(ChatSession {
            extractor_kind: kind,
            engine,
            history: vec![ChatMessage::system(SYSTEM_PROMPT)],
            guideline: guideline.to_string(),
        })
    }
}

fn heading_text(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    let hashes = trimmed.bytes().take_while(|&b| b == b'#').count();
    if hashes == 0 || hashes > 6 {
        return None;
    }
    let rest = &trimmed[hashes..];
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return None;
    }
    Some(rest.trim())
}

/// Pulls a prompt template out of an assistant reply: the first fenced code
/// block, or the whole reply when there is none. The template must carry all
/// [`REQUIRED_SECTIONS`] as headings and at least one placeholder.
pub fn extract_template(assistant_text: &str) -> Result<PromptTemplate, EditorError> {
    let body = strip_code_fences(assistant_text);
    let headings: Vec<String> = body.lines().filter_map(heading_text).map(str::to_lowercase).collect();
    let mut missing: Vec<String> = REQUIRED_SECTIONS
        .iter()
        .filter(|section| {
            let want = section.to_lowercase();
            !headings.iter().any(|h| h.starts_with(&want))
        })
        .map(|s| s.to_string())
        .collect();
    let template = PromptTemplate::new(body.trim_end().to_string())?;
    if template.placeholders().is_empty() {
        missing.push("placeholder".to_string());
    }
    if missing.is_empty() {
        Ok(template)
    } else {
        Err(EditorError::TemplateIncomplete(missing))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ScriptRule;

    const DRAFT: &str = "Here is a draft.\n\n```\n# Task description\nFind drugs.\n\n# Schema definition\nType: Drug\n\n# Output format definition\nJSON list.\n\n# Input\n{{input}}\n```\nLet me know.";

    fn engine() -> Engine {
        Engine::scripted(vec![ScriptRule::new("", DRAFT)]).unwrap()
    }

    #[test]
    fn session_starts_with_system_prompt() {
        let editor = PromptEditor::default();
        let s = editor.new_session("basic", EngineDescriptor::scripted()).unwrap();
        assert_eq!(s.history().len(), 1);
        assert!(s.history()[0].content.starts_with("You are an AI assistant specializing"));
        assert!(matches!(
            editor.new_session("bogus", EngineDescriptor::scripted()),
            Err(EditorError::UnknownExtractorKind(_))
        ));
    }

    #[test]
    fn guideline_injected_once() {
        let editor = PromptEditor::default();
        let e = engine();
        let mut s = editor.new_session("sentence", EngineDescriptor::scripted()).unwrap();
        let mut other = editor.new_session("sentence", EngineDescriptor::scripted()).unwrap();
        assert_eq!(s.chat_turn(&e, "Extract drugs and conditions.").unwrap(), DRAFT);
        assert_eq!(s.history().len(), 3);
        s.chat_turn(&e, "Add an Assertion attribute.").unwrap();
        assert_eq!(s.history().len(), 5);
        assert_eq!(other.history().len(), 1);

        let guideline = editor.store().get(ExtractorKind::Sentence).unwrap();
        let copies = s.history().iter().filter(|m| m.content.contains(guideline)).count();
        assert_eq!(copies, 1);
        assert!(s.history()[1].content.ends_with("Extract drugs and conditions."));
        assert_eq!(s.history()[3].content, "Add an Assertion attribute.");
        let roles: Vec<Role> = s.history().iter().map(|m| m.role).collect();
        assert_eq!(
            roles,
            vec![Role::System, Role::User, Role::Assistant, Role::User, Role::Assistant]
        );
        other.chat_turn(&e, "hi").unwrap();
        assert_eq!(other.history().len(), 3);
    }

    #[test]
    fn failed_turn_leaves_history() {
        let editor = PromptEditor::default();
        let e = Engine::scripted(vec![ScriptRule::new("never matches", "x")]).unwrap();
        let mut s = editor.new_session("basic", EngineDescriptor::scripted()).unwrap();
        assert!(matches!(s.chat_turn(&e, "hello"), Err(EditorError::Engine(_))));
        assert_eq!(s.history().len(), 1);
        assert!(matches!(s.chat_turn(&e, "  "), Err(EditorError::EmptyMessage)));
    }

    #[test]
    fn extract_template_accepts_complete_draft() {
        let t = extract_template(DRAFT).unwrap();
        assert_eq!(t.placeholders(), ["input"]);
        assert!(t.text().starts_with("# Task description"));
    }

    #[test]
    fn extract_template_reports_missing_parts() {
        let no_output = DRAFT.replace("# Output format definition", "Output:");
        match extract_template(&no_output) {
            Err(EditorError::TemplateIncomplete(missing)) => assert_eq!(missing, vec!["Output format"]),
            other => panic!("unexpected {other:?}"),
        }
        let no_slot = DRAFT.replace("{{input}}", "the note");
        match extract_template(&no_slot) {
            Err(EditorError::TemplateIncomplete(missing)) => assert_eq!(missing, vec!["placeholder"]),
            other => panic!("unexpected {other:?}"),
        }
        let err = extract_template("nothing here").unwrap_err();
        assert_eq!(
            err.to_string(),
            "template incomplete, missing: Task description, Schema definition, Output format, Input, placeholder"
        );
    }

    #[test]
    fn every_builtin_guideline_example_is_a_valid_template() {
        let store = GuidelineStore::builtin();
        assert_eq!(store.kinds().count(), ExtractorKind::ALL.len());
        for kind in ExtractorKind::ALL {
            let t = extract_template(store.get(kind).unwrap()).unwrap();
            let values: std::collections::HashMap<String, String> =
                t.placeholders().iter().map(|p| (p.clone(), "x".to_string())).collect();
            t.render(values).unwrap();
        }
    }
}
