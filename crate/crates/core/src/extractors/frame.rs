use std::collections::HashMap;

use crate::datamodel::{assign_ordinal_ids, Frame};
use crate::engine::{ChatMessage, Engine, EngineError};
use crate::parsing::{extract_json_entities, ground_in_chars, split_sentences, RawEntityRecord};

use super::{run_ordered, ExtractError, ExtractorConfig, FrameExtractorKind, ReviewMode};

const INPUT_PLACEHOLDER: &str = "input";

/// Frames plus the bookkeeping needed for run manifests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameOutput {
    pub frames: Vec<Frame>,
    /// Elements of the model output that could not be parsed into records.
    pub discarded: usize,
    /// Records whose text could not be located in the document.
    pub ungrounded: usize,
    pub llm_calls: usize,
    pub notes: Vec<String>,
}

impl FrameOutput {
    fn note(&mut self, note: String) {
        log::warn!("{note}");
        self.notes.push(note);
    }
}

/// Grounds records within one extraction unit. Each distinct entity string
/// (case- and whitespace-folded) keeps its own cursor, so repeated mentions
/// map to successive occurrences while records may arrive in any order.
struct Grounder {
    chars: Vec<char>,
    offset: usize,
    cursors: HashMap<String, usize>,
}

impl Grounder {
    fn new(unit_text: &str, offset: usize) -> Self {
        Self {
            chars: unit_text.chars().collect(),
            offset,
            cursors: HashMap::new(),
        }
    }

    fn ground(&mut self, record: &RawEntityRecord) -> Option<Frame> {
        let key = record
            .entity_text
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase();
        let cursor = self.cursors.get(&key).copied().unwrap_or(0);
        let hit = ground_in_chars(&self.chars, &record.entity_text, cursor).ok()?;
        self.cursors.insert(key, hit.new_cursor);
        Some(Frame {
            frame_id: String::new(),
            entity_text: self.chars[hit.start..hit.end].iter().collect(),
            start: hit.start + self.offset,
            end: hit.end + self.offset,
            attributes: record.attributes.clone(),
        })
    }
}

fn render_prompt(config: &ExtractorConfig, unit_text: &str) -> Result<String, ExtractError> {
    if !config.template.has_placeholder(INPUT_PLACEHOLDER) {
        return Err(ExtractError::Config("frame templates need an {{input}} placeholder".into()));
    }
    Ok(config.template.render([(INPUT_PLACEHOLDER, unit_text)])?)
}

fn base_messages(config: &ExtractorConfig, prompt: String) -> Vec<ChatMessage> {
    let mut messages = Vec::with_capacity(2);
    if let Some(system) = &config.system_prompt {
        messages.push(ChatMessage::system(system.clone()));
    }
    messages.push(ChatMessage::user(prompt));
    messages
}

/// Parses one response and grounds its records into `out.frames`, skipping
/// frames whose span and attributes already appear there when `dedup` is set.
fn collect_frames(out: &mut FrameOutput, response: &str, grounder: &mut Grounder, dedup: bool) {
    let parse = extract_json_entities(response);
    out.discarded += parse.discarded;
    for note in parse.notes {
        out.note(note);
    }
    for record in &parse.records {
        match grounder.ground(record) {
            Some(frame) => {
                if dedup && out.frames.iter().any(|f| f.same_content(&frame)) {
                    continue;
                }
                out.frames.push(frame);
            }
            None => {
                out.ungrounded += 1;
                out.note(format!("dropped ungroundable entity {:?}", record.entity_text));
            }
        }
    }
}

/// One call over the whole document.
pub fn basic_extract(engine: &Engine, config: &ExtractorConfig, doc_text: &str) -> Result<FrameOutput, ExtractError> {
    config.check()?;
    let prompt = render_prompt(config, doc_text)?;
    let response = engine.chat(&base_messages(config, prompt), &config.generation)?;

    let mut out = FrameOutput { llm_calls: 1, ..Default::default() };
    collect_frames(&mut out, &response, &mut Grounder::new(doc_text, 0), false);
    assign_ordinal_ids(&mut out.frames);
    Ok(out)
}

/// Initial extraction followed by a review turn that sees the first answer.
pub fn review_extract(engine: &Engine, config: &ExtractorConfig, doc_text: &str) -> Result<FrameOutput, ExtractError> {
    config.check()?;
    let prompt = render_prompt(config, doc_text)?;
    let mut messages = base_messages(config, prompt);
    let initial = engine.chat(&messages, &config.generation)?;

    messages.push(ChatMessage::assistant(initial.clone()));
    messages.push(ChatMessage::user(config.review_instruction.clone()));
    let review = engine.chat(&messages, &config.generation)?;

    let mut out = FrameOutput { llm_calls: 2, ..Default::default() };
    match config.review_mode {
        ReviewMode::Addition => {
            collect_frames(&mut out, &initial, &mut Grounder::new(doc_text, 0), false);
            collect_frames(&mut out, &review, &mut Grounder::new(doc_text, 0), true);
        }
        ReviewMode::Revision => {
            collect_frames(&mut out, &review, &mut Grounder::new(doc_text, 0), false);
        }
    }
    assign_ordinal_ids(&mut out.frames);
    Ok(out)
}

/// One call per sentence; records are grounded inside their own sentence.
/// A failed call skips that sentence; if every call fails, the first error
/// is returned.
pub fn sentence_extract(engine: &Engine, config: &ExtractorConfig, doc_text: &str) -> Result<FrameOutput, ExtractError> {
    config.check()?;
    let sentences = split_sentences(doc_text);
    let prompts = sentences
        .iter()
        .map(|s| render_prompt(config, &s.text))
        .collect::<Result<Vec<_>, _>>()?;

    let responses: Vec<Result<String, EngineError>> = run_ordered(prompts.len(), config.max_concurrency, |i| {
        engine.chat(&base_messages(config, prompts[i].clone()), &config.generation)
    });

    let mut out = FrameOutput { llm_calls: sentences.len(), ..Default::default() };
    let mut first_error = None;
    let mut failures = 0;
    for (sentence, response) in sentences.iter().zip(responses) {
        match response {
            Ok(text) => {
                let mut grounder = Grounder::new(&sentence.text, sentence.start);
                collect_frames(&mut out, &text, &mut grounder, false);
            }
            Err(e) => {
                failures += 1;
                out.note(format!("sentence ({},{}) skipped: {e}", sentence.start, sentence.end));
                first_error.get_or_insert(e);
            }
        }
    }
    if failures > 0 && failures == sentences.len() {
        if let Some(e) = first_error {
            return Err(e.into());
        }
    }
    assign_ordinal_ids(&mut out.frames);
    Ok(out)
}

pub fn extract_frames(
    kind: FrameExtractorKind,
    engine: &Engine,
    config: &ExtractorConfig,
    doc_text: &str,
) -> Result<FrameOutput, ExtractError> {
    match kind {
        FrameExtractorKind::Basic => basic_extract(engine, config, doc_text),
        FrameExtractorKind::Review => review_extract(engine, config, doc_text),
        FrameExtractorKind::Sentence => sentence_extract(engine, config, doc_text),
    }
}
