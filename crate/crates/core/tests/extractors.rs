use std::time::Instant;

use llmie_core::datamodel::Frame;
use llmie_core::engine::{Engine, ScriptRule};
use llmie_core::extractors::{
    enumerate_pairs, extract_frames, extract_relations, ExtractorConfig, FrameExtractorKind, RelationMode, NO_RELATION,
};
use llmie_core::pipeline::{Pipeline, RelationFilter, RelationStage};
use llmie_core::prompting::PromptTemplate;

const NOTE: &str = "Aspirin 81 mg was given. Pain resolved overnight. Aspirin 325 mg stopped.";

fn frame_config() -> ExtractorConfig {
    ExtractorConfig::new(PromptTemplate::new("Extract drugs and dosages as JSON.\n\n{{input}}").unwrap())
}

fn relation_config() -> ExtractorConfig {
    ExtractorConfig::new(PromptTemplate::new("Are [E1] and [E2] related? {{relation_types}}\n{{context}}").unwrap())
        .with_context_padding(20)
}

fn engine() -> Engine {
    Engine::scripted(vec![
        ScriptRule::new("[E1]Aspirin[/E1] [E2]81 mg[/E2]", "Yes"),
        ScriptRule::new("[E1]Aspirin[/E1] [E2]325 mg[/E2]", "Yes"),
        ScriptRule::new("[/E2]", "No"),
        ScriptRule::new("Review", r#"[{"entity_text": "Aspirin", "attr": {"Type": "Drug"}}]"#),
        ScriptRule::new(
            "Aspirin 81 mg was given",
            r#"[{"entity_text": "Aspirin", "attr": {"Type": "Drug"}}, {"entity_text": "81 mg", "attr": {"Type": "Dosage"}},
                {"entity_text": "Aspirin", "attr": {"Type": "Drug"}}, {"entity_text": "325 mg", "attr": {"Type": "Dosage"}}]"#,
        ),
        ScriptRule::new("Pain resolved", "[]"),
        ScriptRule::new("Aspirin 325 mg stopped", r#"[{"entity_text": "Aspirin", "attr": {"Type": "Drug"}}, {"entity_text": "325 mg", "attr": {"Type": "Dosage"}}]"#),
    ])
    .unwrap()
}

fn drug_dosage(a: &Frame, b: &Frame) -> Vec<String> {
    let mut t = [a.attr("Type").unwrap_or(""), b.attr("Type").unwrap_or("")];
    t.sort_unstable();
    if t == ["Dosage", "Drug"] {
        vec!["Dosage-Drug".into(), NO_RELATION.into()]
    } else {
        Vec::new()
    }
}

fn four_frames() -> Vec<Frame> {
    vec![
        Frame::new("0001", "Aspirin", 0, 7).with_attr("Type", "Drug"),
        Frame::new("0002", "81 mg", 8, 13).with_attr("Type", "Dosage"),
        Frame::new("0003", "Pain", 25, 29).with_attr("Type", "Symptom"),
        Frame::new("0004", "325 mg", 58, 64).with_attr("Type", "Dosage"),
    ]
}

#[test]
fn call_count_law() {
    let started = Instant::now();
    for (kind, calls) in [(FrameExtractorKind::Basic, 1), (FrameExtractorKind::Review, 2), (FrameExtractorKind::Sentence, 3)] {
        let e = engine();
        let out = extract_frames(kind, &e, &frame_config(), NOTE).unwrap();
        assert_eq!((e.call_count(), out.llm_calls), (calls, calls), "{kind}");
    }

    let mut doc = llmie_core::datamodel::IEDocument::new("d", NOTE);
    doc.frames = four_frames();
    let permissive = enumerate_pairs(NOTE, &doc.frames, |_, _| vec!["related".into()], 20);
    let e = engine();
    extract_relations(RelationMode::Binary, &e, &relation_config(), &doc, &permissive).unwrap();
    assert_eq!(e.call_count(), 6);

    let filtered = enumerate_pairs(NOTE, &doc.frames, drug_dosage, 20);
    let e = engine();
    let out = extract_relations(RelationMode::Multiclass, &e, &relation_config(), &doc, &filtered).unwrap();
    assert_eq!(e.call_count(), 2);
    assert_eq!(out.llm_calls, filtered.len());
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn sentence_extractor_grounds_per_sentence() {
    let out = extract_frames(FrameExtractorKind::Sentence, &engine(), &frame_config(), NOTE).unwrap();
    let spans: Vec<(&str, usize, usize)> = out.frames.iter().map(|f| (f.entity_text.as_str(), f.start, f.end)).collect();
    // the first sentence's reply names a second Aspirin and a 325 mg that do
    // not occur in that sentence; they are dropped, not grounded elsewhere
    assert_eq!(spans, vec![("Aspirin", 0, 7), ("81 mg", 8, 13), ("Aspirin", 50, 57), ("325 mg", 58, 64)]);
    assert_eq!(out.ungrounded, 2);
}

#[test]
fn filter_soundness_over_pair_counts() {
    let frames = four_frames();
    let all = enumerate_pairs(NOTE, &frames, |_, _| vec!["x".into()], 0);
    assert_eq!(all.len(), 6);
    for t in &all {
        assert!((t.frame_1.start, t.frame_1.end) <= (t.frame_2.start, t.frame_2.end));
    }
    assert_eq!(enumerate_pairs(NOTE, &frames, drug_dosage, 0).len(), 2);
    assert!(enumerate_pairs(NOTE, &frames, |_, _| Vec::new(), 0).is_empty());
}

fn pipeline(concurrency: usize) -> Pipeline {
    let filter = RelationFilter::from_json(r#"{"rules": [{"between": ["Drug", "Dosage"], "relation_types": ["Dosage-Drug"]}]}"#).unwrap();
    Pipeline::new(FrameExtractorKind::Sentence, frame_config().with_concurrency(concurrency)).with_relations(RelationStage {
        mode: RelationMode::Binary,
        config: relation_config().with_concurrency(concurrency),
        filter,
    })
}

#[test]
fn concurrency_does_not_change_output() {
    let sequential = pipeline(1).run(&engine(), "note", NOTE).unwrap();
    for _ in 0..5 {
        let parallel = pipeline(4).run(&engine(), "note", NOTE).unwrap();
        assert_eq!(parallel.document.to_json(), sequential.document.to_json());
    }
    assert_eq!(sequential.document.relations.len(), 2);
    assert_eq!(sequential.relation_calls, 4);
}
