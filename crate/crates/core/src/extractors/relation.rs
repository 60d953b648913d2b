use std::cmp::Reverse;
use std::collections::HashMap;

use serde_json::json;

use crate::datamodel::{Frame, IEDocument, Relation};
use crate::engine::{ChatMessage, Engine};

use super::{run_ordered, ExtractError, ExtractorConfig, RelationMode};

/// Null label for multi-class relation extraction.
pub const NO_RELATION: &str = "No-relation";

const RELATION_PLACEHOLDERS: &[&str] = &["context", "frame_1", "frame_2", "relation_types"];

/// A candidate pair that survived the pre-filter. `frame_1` is the frame
/// whose span comes first in the text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePairTask {
    pub frame_1: Frame,
    pub frame_2: Frame,
    pub possible_types: Vec<String>,
    pub context: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationOutput {
    pub relations: Vec<Relation>,
    pub llm_calls: usize,
    pub notes: Vec<String>,
}

/// Text around both frames, from `padding` characters before the earlier
/// span to `padding` after the later one (clamped), with the mentions marked
/// `[E1]...[/E1]` and `[E2]...[/E2]` (E1 = earlier span). Nested spans get
/// well-nested markers, outer frame first.
pub fn build_pair_context(doc_text: &str, frame_1: &Frame, frame_2: &Frame, context_padding: usize) -> String {
    let chars: Vec<char> = doc_text.chars().collect();
    let (e1, e2) = order_by_span(frame_1, frame_2);
    let lo = e1.start.min(e2.start).saturating_sub(context_padding);
    let hi = (e1.end.max(e2.end) + context_padding).min(chars.len());

    // (position, closes-before-opens, tie-breakers, marker)
    let mut events: Vec<((usize, u8, Reverse<usize>, usize), String)> = Vec::with_capacity(4);
    for (k, f) in [(1usize, e1), (2, e2)] {
        events.push(((f.start, 1, Reverse(f.end), k), format!("[E{k}]")));
        events.push(((f.end, 0, Reverse(f.start), 3 - k), format!("[/E{k}]")));
    }
    events.sort_by(|a, b| a.0.cmp(&b.0));

    let mut out = String::new();
    let mut pos = lo;
    for ((at, ..), marker) in events {
        let at = at.clamp(lo, hi);
        out.extend(&chars[pos..at]);
        out.push_str(&marker);
        pos = at;
    }
    out.extend(&chars[pos..hi]);
    out
}

fn order_by_span<'a>(a: &'a Frame, b: &'a Frame) -> (&'a Frame, &'a Frame) {
    if (b.start, b.end) < (a.start, a.end) {
        (b, a)
    } else {
        (a, b)
    }
}

/// Builds a task for every unordered pair `i < j` that `possible_types_fn`
/// admits. Pairs mapped to an empty list are skipped without an LLM call.
pub fn enumerate_pairs<F>(doc_text: &str, frames: &[Frame], possible_types_fn: F, context_padding: usize) -> Vec<FramePairTask>
where
    F: Fn(&Frame, &Frame) -> Vec<String>,
{
    let mut tasks = Vec::new();
    for (i, a) in frames.iter().enumerate() {
        for b in &frames[i + 1..] {
            let (first, second) = order_by_span(a, b);
            let possible_types = possible_types_fn(first, second);
            if possible_types.is_empty() {
                continue;
            }
            tasks.push(FramePairTask {
                frame_1: first.clone(),
                frame_2: second.clone(),
                possible_types,
                context: build_pair_context(doc_text, first, second, context_padding),
            });
        }
    }
    tasks
}

fn frame_json(frame: &Frame) -> String {
    json!({
        "frame_id": frame.frame_id,
        "entity_text": frame.entity_text,
        "attr": frame.attributes,
    })
    .to_string()
}

fn render_task(config: &ExtractorConfig, task: &FramePairTask, list_types: bool) -> Result<String, ExtractError> {
    let types = task.possible_types.join(", ");
    let values: HashMap<String, String> = [
        ("context", task.context.clone()),
        ("frame_1", frame_json(&task.frame_1)),
        ("frame_2", frame_json(&task.frame_2)),
        ("relation_types", types.clone()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mut prompt = config.template.render(values)?;
    if list_types && !config.template.has_placeholder("relation_types") {
        prompt.push_str(&format!("\n\nPossible relation types: {types}"));
    }
    Ok(prompt)
}

fn check_template(config: &ExtractorConfig) -> Result<(), ExtractError> {
    config.check()?;
    if let Some(bad) = config
        .template
        .placeholders()
        .iter()
        .find(|p| !RELATION_PLACEHOLDERS.contains(&p.as_str()))
    {
        return Err(ExtractError::Config(format!(
            "relation templates support {{{{context}}}}, {{{{frame_1}}}}, {{{{frame_2}}}} and {{{{relation_types}}}}; found {{{{{bad}}}}}"
        )));
    }
    Ok(())
}

/// Yes/no decision: the first word that is `true`, `yes`, `false` or `no`
/// (case-insensitive) decides. `None` when no such word occurs.
pub fn parse_binary_answer(answer: &str) -> Option<bool> {
    answer
        .split(|c: char| !c.is_alphabetic())
        .find_map(|word| match word.to_lowercase().as_str() {
            "true" | "yes" => Some(true),
            "false" | "no" => Some(false),
            _ => None,
        })
}

/// Longest possible type contained in the answer, compared
/// case-insensitively. Earlier list entries win ties.
pub fn parse_multiclass_answer<'a>(answer: &str, possible_types: &'a [String]) -> Option<&'a str> {
    let answer = answer.to_lowercase();
    let mut best: Option<&'a str> = None;
    for t in possible_types {
        if !t.is_empty()
            && answer.contains(&t.to_lowercase())
            && best.map_or(true, |b| t.chars().count() > b.chars().count())
        {
            best = Some(t);
        }
    }
    best
}

fn run_tasks<D>(engine: &Engine, config: &ExtractorConfig, tasks: &[FramePairTask], list_types: bool, decide: D) -> Result<RelationOutput, ExtractError>
where
    D: Fn(&FramePairTask, &str) -> Result<Option<Relation>, String>,
{
    let prompts = tasks
        .iter()
        .map(|t| render_task(config, t, list_types))
        .collect::<Result<Vec<_>, _>>()?;
    let responses = run_ordered(tasks.len(), config.max_concurrency, |i| {
        let mut messages = Vec::with_capacity(2);
        if let Some(system) = &config.system_prompt {
            messages.push(ChatMessage::system(system.clone()));
        }
        messages.push(ChatMessage::user(prompts[i].clone()));
        engine.chat(&messages, &config.generation)
    });

    let mut out = RelationOutput { llm_calls: tasks.len(), ..Default::default() };
    for (task, response) in tasks.iter().zip(responses) {
        let pair = format!("({}, {})", task.frame_1.frame_id, task.frame_2.frame_id);
        let decision = response
            .map_err(|e| format!("engine error: {e}"))
            .and_then(|answer| decide(task, &answer));
        match decision {
            Ok(Some(relation)) => out.relations.push(relation),
            Ok(None) => {}
            Err(reason) => {
                let note = format!("pair {pair}: {reason}; treated as no relation");
                log::warn!("{note}");
                out.notes.push(note);
            }
        }
    }
    Ok(out)
}

/// Existence of a relation per pair; positives become untyped relations.
pub fn binary_relation_extract(engine: &Engine, config: &ExtractorConfig, doc: &IEDocument, tasks: &[FramePairTask]) -> Result<RelationOutput, ExtractError> {
    check_template(config)?;
    check_frames(doc, tasks)?;
    run_tasks(engine, config, tasks, false, |task, answer| match parse_binary_answer(answer) {
        Some(true) => Ok(Some(Relation::untyped(&task.frame_1.frame_id, &task.frame_2.frame_id))),
        Some(false) => Ok(None),
        None => Err(format!("unparseable answer {answer:?}")),
    })
}

/// Relation type per pair, chosen from the task's possible types.
pub fn multiclass_relation_extract(engine: &Engine, config: &ExtractorConfig, doc: &IEDocument, tasks: &[FramePairTask]) -> Result<RelationOutput, ExtractError> {
    check_template(config)?;
    check_frames(doc, tasks)?;
    if let Some(task) = tasks.iter().find(|t| !t.possible_types.iter().any(|p| p == NO_RELATION)) {
        return Err(ExtractError::Config(format!(
            "pair ({}, {}) lacks the {NO_RELATION:?} label",
            task.frame_1.frame_id, task.frame_2.frame_id
        )));
    }
    run_tasks(engine, config, tasks, true, |task, answer| {
        match parse_multiclass_answer(answer, &task.possible_types) {
            Some(NO_RELATION) => Ok(None),
            Some(t) => Ok(Some(Relation::typed(&task.frame_1.frame_id, &task.frame_2.frame_id, t))),
            None => Err(format!("answer {answer:?} names none of the possible types")),
        }
    })
}

fn check_frames(doc: &IEDocument, tasks: &[FramePairTask]) -> Result<(), ExtractError> {
    for task in tasks {
        for f in [&task.frame_1, &task.frame_2] {
            if doc.frame(&f.frame_id).is_none() {
                return Err(ExtractError::Config(format!("task frame {} is not in the document", f.frame_id)));
            }
        }
    }
    Ok(())
}

pub fn extract_relations(
    mode: RelationMode,
    engine: &Engine,
    config: &ExtractorConfig,
    doc: &IEDocument,
    tasks: &[FramePairTask],
) -> Result<RelationOutput, ExtractError> {
    match mode {
        RelationMode::Binary => binary_relation_extract(engine, config, doc, tasks),
        RelationMode::Multiclass => multiclass_relation_extract(engine, config, doc, tasks),
    }
}
