use llmie_core::engine::{EngineDescriptor, Engine, Role, ScriptRule};
use llmie_core::prompt_editor::{extract_template, EditorError, ExtractorKind, PromptEditor, SYSTEM_PROMPT};

#[test]
fn first_turn_is_wrapped_and_later_turns_are_verbatim() {
    let editor = PromptEditor::default();
    let mut session = editor.new_session("sentence", EngineDescriptor::scripted()).unwrap();
    assert_eq!(session.extractor_kind, ExtractorKind::Sentence);
    let engine = Engine::scripted(vec![ScriptRule::new("", "noted")]).unwrap();

    session.chat_turn(&engine, "Extract drugs please").unwrap();
    session.chat_turn(&engine, "Shorter, please").unwrap();
    let h = session.history();
    assert_eq!(h.len(), 5);
    assert_eq!((h[0].role, h[0].content.as_str()), (Role::System, SYSTEM_PROMPT));
    let guideline = editor.store().get(ExtractorKind::Sentence).unwrap();
    assert!(h[1].content.contains(guideline) && h[1].content.contains("Extract drugs please"));
    assert_eq!(h[3].content, "Shorter, please");
    assert_eq!(session.last_reply(), Some("noted"));
}

#[test]
fn failed_turn_leaves_history_alone() {
    let mut session = PromptEditor::default().new_session("basic", EngineDescriptor::scripted()).unwrap();
    let engine = Engine::scripted(vec![ScriptRule::new("never matches this", "x")]).unwrap();
    assert!(matches!(session.chat_turn(&engine, "hello"), Err(EditorError::Engine(_))));
    assert_eq!(session.history().len(), 1);
    assert!(matches!(session.chat_turn(&engine, "  "), Err(EditorError::EmptyMessage)));
}

#[test]
fn unknown_kind_is_rejected() {
    assert!(matches!(
        PromptEditor::default().new_session("ner", EngineDescriptor::scripted()),
        Err(EditorError::UnknownExtractorKind(_))
    ));
}

#[test]
fn every_builtin_guideline_example_is_a_valid_template() {
    let editor = PromptEditor::default();
    let kinds: Vec<ExtractorKind> = editor.store().kinds().collect();
    assert_eq!(kinds.len(), 5);
    for kind in kinds {
        let guideline = editor.store().get(kind).unwrap();
        let template = extract_template(guideline).unwrap_or_else(|e| panic!("{}: {e}", kind.as_str()));
        assert!(!template.placeholders().is_empty());
    }
}

#[test]
fn incomplete_template_names_missing_parts() {
    match extract_template("```\n# Task description\nDo it.\n```") {
        Err(EditorError::TemplateIncomplete(missing)) => {
            assert!(missing.iter().any(|m| m.contains("Schema")));
            assert!(missing.iter().any(|m| m.contains("placeholder")));
        }
        other => panic!("{other:?}"),
    }
}
